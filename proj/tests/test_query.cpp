#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "kgq/query.hpp"
#include "support.hpp"

using namespace kgq;

namespace {

// Vocab with drug/protein/disease names so the canonical example queries parse.
Vocab bio_vocab() {
  auto kg = test::kg_from_lines({"d1 interacts p1", "p1 assoc t", "p1 assoc t1", "p2 assoc t2",
                                 "d2 interacts p2"});
  return kg.vocab;
}

// Truth-table evaluation of a formula under a boolean assignment per distinct atom.
bool eval_formula(const Formula& f, const std::map<Atom, bool>& assign) {
  switch (f.node) {
    case Formula::Node::Atom:
      return assign.at(f.atom);
    case Formula::Node::And:
      for (const auto& c : f.children) {
        if (!eval_formula(c, assign)) return false;
      }
      return true;
    case Formula::Node::Or:
      for (const auto& c : f.children) {
        if (eval_formula(c, assign)) return true;
      }
      return false;
  }
  return false;
}

bool eval_dnf(const DnfQuery& q, const std::map<Atom, bool>& assign) {
  for (const Conjunction& c : q.disjuncts) {
    bool all = true;
    for (const Atom& a : c.atoms) all = all && assign.at(a);
    if (all) return true;
  }
  return false;
}

std::set<Atom> formula_atoms(const Formula& f) {
  std::set<Atom> atoms;
  auto walk = [&](auto&& self, const Formula& node) -> void {
    if (node.node == Formula::Node::Atom) {
      atoms.insert(node.atom);
      return;
    }
    for (const auto& c : node.children) self(self, c);
  };
  walk(walk, f);
  return atoms;
}

void check_equivalent(const EpfoQuery& q, const DnfQuery& dnf) {
  const std::set<Atom> atom_set = formula_atoms(q.formula);
  std::vector<Atom> atoms(atom_set.begin(), atom_set.end());
  REQUIRE(atoms.size() <= 16);
  for (std::size_t mask = 0; mask < (std::size_t{1} << atoms.size()); ++mask) {
    std::map<Atom, bool> assign;
    for (std::size_t i = 0; i < atoms.size(); ++i) assign[atoms[i]] = (mask >> i) & 1;
    CHECK(eval_formula(q.formula, assign) == eval_dnf(dnf, assign));
  }
}

}  // namespace

TEST_CASE("parsing the drug-protein example") {
  Vocab vocab = bio_vocab();
  EpfoQuery q = parse_query("?D : exists P . interacts(D,P) & assoc(P,t)", vocab);
  CHECK(q.var_names[kTargetVar] == "D");
  REQUIRE(q.bound_vars.size() == 1);
  CHECK(q.var_names[q.bound_vars[0]] == "P");
  REQUIRE(q.formula.node == Formula::Node::And);
  REQUIRE(q.formula.children.size() == 2);

  // Both atoms are normalized so the dependency runs toward the target:
  // interacts(D,P) flips to inv_interacts(P,D), assoc(P,t) to inv_assoc(t,P).
  const Atom& first = q.formula.children[0].atom;
  CHECK(vocab.relation_names[first.p] == "inv_interacts");
  CHECK(first.subject == Term::var(q.bound_vars[0]));
  CHECK(first.object == Term::var(kTargetVar));
  const Atom& second = q.formula.children[1].atom;
  CHECK(vocab.relation_names[second.p] == "inv_assoc");
  CHECK(second.subject == Term::anchor(vocab.entity("t")));
  CHECK(second.object == Term::var(q.bound_vars[0]));
}

TEST_CASE("parsing a disjunctive variant") {
  Vocab vocab = bio_vocab();
  EpfoQuery q =
      parse_query("?D : exists P . interacts(D,P) & (assoc(P,t1) | assoc(P,t2))", vocab);
  REQUIRE(q.formula.node == Formula::Node::And);
  CHECK(q.formula.children[1].node == Formula::Node::Or);

  DnfQuery dnf = to_dnf(q);
  REQUIRE(dnf.disjuncts.size() == 2);
  CHECK(dnf.disjuncts[0].atoms.size() == 2);
  CHECK(dnf.disjuncts[1].atoms.size() == 2);
  // Both branches share the projection atom and differ in the anchored one.
  CHECK(dnf.disjuncts[0].atoms[0] == dnf.disjuncts[1].atoms[0]);
  CHECK(dnf.disjuncts[0].atoms[1] != dnf.disjuncts[1].atoms[1]);
  check_equivalent(q, dnf);
}

TEST_CASE("parse errors") {
  Vocab vocab = bio_vocab();
  CHECK_THROWS_WITH_AS(parse_query("?D : assoc(P,t)", vocab),
                       doctest::Contains("unquantified variable 'P'"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists D . assoc(D,t)", vocab),
                       doctest::Contains("both quantified and target"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists P . nosuchrel(D,P)", vocab),
                       doctest::Contains("unknown relation"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists P . interacts(D,P) & assoc(t,t1)", vocab),
                       doctest::Contains("two anchor"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists P . interacts(P,P)", vocab),
                       doctest::Contains("itself"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists P . assoc(P,t)", vocab),
                       doctest::Contains("target"), ParseError);
  CHECK_THROWS_WITH_AS(parse_query("?D : exists P . interacts(D,P) & assoc(P,t) &", vocab),
                       doctest::Contains("expected"), ParseError);
  // Position points at the offending token.
  try {
    parse_query("?D : exists P . interacts(D,P) & nosuchrel(P,t)", bio_vocab());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position == 33);
  }
}

TEST_CASE("print/parse round-trip is structurally stable") {
  Vocab vocab = bio_vocab();
  for (const char* text : {
           "?D : exists P . interacts(D,P) & assoc(P,t)",
           "?D : exists P . interacts(D,P) & (assoc(P,t1) | assoc(P,t2))",
           "?D : interacts(d1,D)",
           "?D : exists P,Q . interacts(P,Q) & interacts(d1,P) & assoc(Q,t) & interacts(Q,D)",
       }) {
    EpfoQuery q = parse_query(text, vocab);
    std::string printed = print_query(q, vocab);
    EpfoQuery q2 = parse_query(printed, vocab);
    CHECK(print_query(q2, vocab) == printed);
    CHECK(to_dnf(q).disjuncts.size() == to_dnf(q2).disjuncts.size());
  }
}

TEST_CASE("to_dnf identity on a conjunctive query") {
  Vocab vocab = bio_vocab();
  EpfoQuery q = parse_query("?D : exists P . interacts(D,P) & assoc(P,t)", vocab);
  DnfQuery dnf = to_dnf(q);
  REQUIRE(dnf.disjuncts.size() == 1);
  CHECK(dnf.disjuncts[0].atoms.size() == 2);
  check_equivalent(q, dnf);
}

TEST_CASE("to_dnf distributes (a|b) & (c|d) into four disjuncts") {
  auto kg = test::kg_from_lines({"a p x", "a q x", "x r y", "x s y"});
  const Vocab& vocab = kg.vocab;
  EpfoQuery q = parse_query("?T : exists V . (p(a,V) | q(a,V)) & (r(V,T) | s(V,T))", vocab);
  DnfQuery dnf = to_dnf(q);
  REQUIRE(dnf.disjuncts.size() == 4);
  std::set<std::vector<Atom>> seen;
  for (const auto& c : dnf.disjuncts) {
    CHECK(c.atoms.size() == 2);
    seen.insert(c.atoms);
  }
  CHECK(seen.size() == 4);
  check_equivalent(q, dnf);
}

TEST_CASE("to_dnf dedups repeated atoms inside a conjunction") {
  auto kg = test::kg_from_lines({"a p x"});
  EpfoQuery q = parse_query("?T : p(a,T) & p(a,T)", kg.vocab);
  DnfQuery dnf = to_dnf(q);
  REQUIRE(dnf.disjuncts.size() == 1);
  CHECK(dnf.disjuncts[0].atoms.size() == 1);
}

TEST_CASE("validity errors name the problem") {
  auto kg = test::kg_from_lines({"a p x", "x q y"});
  const Vocab& vocab = kg.vocab;
  // V2 -> V1 -> V2 cycle.
  EpfoQuery cyc;
  cyc.var_names = {"T", "V1", "V2"};
  cyc.bound_vars = {1, 2};
  const RelationId p = vocab.relation("p"), q = vocab.relation("q");
  cyc.formula = Formula::conj({
      Formula::leaf({p, Term::var(1), Term::var(2)}),
      Formula::leaf({q, Term::var(2), Term::var(1)}),
      Formula::leaf({p, Term::anchor(0), Term::var(1)}),
      Formula::leaf({q, Term::var(1), Term::var(kTargetVar)}),
  });
  CHECK_THROWS_WITH_AS(to_dnf(cyc), doctest::Contains("cycle"), InvalidQuery);

  // A bound variable that nothing consumes is an extra sink.
  EpfoQuery sink = parse_query("?T : exists V . p(a,T) & p(a,V)", vocab);
  CHECK_THROWS_WITH_AS(to_dnf(sink), doctest::Contains("extra sink"), InvalidQuery);

  // A bound variable with no incoming atom would be a non-anchor source.
  EpfoQuery src;
  src.var_names = {"T", "V"};
  src.bound_vars = {1};
  src.formula = Formula::conj({
      Formula::leaf({p, Term::var(1), Term::var(kTargetVar)}),
  });
  CHECK_THROWS_WITH_AS(to_dnf(src), doctest::Contains("no incoming"), InvalidQuery);
}

TEST_CASE("topo order follows the dependency chain") {
  Vocab vocab = bio_vocab();
  // Chain t -> P -> D: the anchored atom must come first even though the
  // query lists the projection atom first.
  EpfoQuery q = parse_query("?D : exists P . interacts(D,P) & assoc(P,t)", vocab);
  DnfQuery dnf = to_dnf(q);
  auto order = topo_order(dnf.disjuncts[0]);
  REQUIRE(order.size() == 2);
  CHECK(order[0].subject.is_anchor());
  CHECK(order[1].object == Term::var(kTargetVar));

  // Two anchors into the target keep input order.
  EpfoQuery q2 = parse_query("?D : interacts(d1,D) & interacts(d2,D)", vocab);
  auto order2 = topo_order(to_dnf(q2).disjuncts[0]);
  CHECK(order2[0].subject == Term::anchor(vocab.entity("d1")));
  CHECK(order2[1].subject == Term::anchor(vocab.entity("d2")));
}

TEST_CASE("topo order property on random valid conjunctions") {
  // Random chains/trees built over a fixed skeleton stay topologically
  // consistent: when an atom is visited its subject is already resolved.
  std::mt19937_64 rng(31337);
  auto kg = test::kg_from_lines({"a p x", "b q y", "x r z"});
  const Vocab& vocab = kg.vocab;
  std::uniform_int_distribution<int> rel(0, static_cast<int>(vocab.num_relations()) - 1);
  for (int round = 0; round < 100; ++round) {
    // Skeleton: anchors a,b; vars V1..Vm chained to T; extra cross atoms.
    const int m = std::uniform_int_distribution<int>(1, 3)(rng);
    Conjunction c;
    VarId prev = 1;
    c.atoms.push_back({static_cast<RelationId>(rel(rng)), Term::anchor(0), Term::var(1)});
    for (VarId v = 2; v <= static_cast<VarId>(m); ++v) {
      c.atoms.push_back({static_cast<RelationId>(rel(rng)), Term::var(prev), Term::var(v)});
      prev = v;
    }
    c.atoms.push_back({static_cast<RelationId>(rel(rng)), Term::var(prev), Term::var(kTargetVar)});
    if (m >= 2 && round % 2 == 0) {
      c.atoms.push_back({static_cast<RelationId>(rel(rng)), Term::var(1), Term::var(kTargetVar)});
    }
    std::shuffle(c.atoms.begin(), c.atoms.end(), rng);

    std::vector<std::string> names{"T", "V1", "V2", "V3"};
    validate_conjunction(c, names);
    auto order = topo_order(c);
    REQUIRE(order.size() == c.atoms.size());
    std::set<VarId> resolved;
    for (const Atom& a : order) {
      if (a.subject.is_var()) CHECK(resolved.count(a.subject.id) == 1);
      resolved.insert(a.object.id);
    }
  }
}

TEST_CASE("random skeleton formulas: DNF equivalence and disjunct counts") {
  std::mt19937_64 rng(4242);
  auto kg = test::kg_from_lines({"a p x", "b q y", "x r z", "y s z"});
  const Vocab& vocab = kg.vocab;
  const int n_rel = static_cast<int>(vocab.num_relations());
  std::uniform_int_distribution<int> rel(0, n_rel - 1);
  std::uniform_int_distribution<int> branches(1, 3);

  for (int round = 0; round < 500; ++round) {
    // Two-edge skeleton a -> V1 -> T; each edge becomes an Or of 1..3 atom
    // variants, so every DNF conjunct covers the skeleton and stays valid.
    std::vector<Formula> ors;
    std::vector<int> counts;
    int total_atoms = 0;
    auto make_or = [&](Term s, Term o) {
      const int n = branches(rng);
      counts.push_back(n);
      std::set<RelationId> rels;
      while (static_cast<int>(rels.size()) < n) rels.insert(static_cast<RelationId>(rel(rng)));
      std::vector<Formula> alts;
      for (RelationId r : rels) alts.push_back(Formula::leaf({r, s, o}));
      total_atoms += n;
      return n == 1 ? alts[0] : Formula::disj(std::move(alts));
    };
    EpfoQuery q;
    q.var_names = {"T", "V1"};
    q.bound_vars = {1};
    q.formula = Formula::conj({make_or(Term::anchor(0), Term::var(1)),
                               make_or(Term::var(1), Term::var(kTargetVar))});
    REQUIRE(total_atoms <= 6);

    DnfQuery dnf = to_dnf(q);
    CHECK(static_cast<int>(dnf.disjuncts.size()) == counts[0] * counts[1]);
    for (const auto& c : dnf.disjuncts) CHECK(c.atoms.size() <= 2);
    check_equivalent(q, dnf);
  }
}
