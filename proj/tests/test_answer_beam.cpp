#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "kgq/answer_beam.hpp"
#include "kgq/query_gen.hpp"
#include "support.hpp"

using namespace kgq;

namespace {

// Exhaustive maximizer over all variable-to-entity assignments: for every
// target entity, the best t-norm fold over every combination of bound
// variable substitutions. The beam at full width must reproduce it.
Eigen::VectorXd enumeration_oracle(const EmbeddingModel& m, const DnfQuery& q, TNormKind kind) {
  const auto n = m.num_entities();
  // Calibrated atom score for concrete entities.
  auto atom_score = [&](const Atom& a, const std::map<VarId, EntityId>& sub, EntityId target) {
    auto value_of = [&](const Term& t) {
      if (t.is_anchor()) return t.id;
      if (t.id == kTargetVar) return target;
      return sub.at(t.id);
    };
    const Eigen::VectorXd raw = score_all_objects(m, a.p, m.entity(value_of(a.subject)));
    return calibrate(m, raw)(value_of(a.object));
  };

  Eigen::VectorXd result;
  for (std::size_t d = 0; d < q.disjuncts.size(); ++d) {
    const Conjunction& c = q.disjuncts[d];
    std::vector<VarId> bound;
    for (VarId v : conjunction_vars(c)) {
      if (v != kTargetVar) bound.push_back(v);
    }
    Eigen::VectorXd best = Eigen::VectorXd::Constant(n, -1.0);
    std::vector<EntityId> combo(bound.size(), 0);
    while (true) {
      std::map<VarId, EntityId> sub;
      for (std::size_t i = 0; i < bound.size(); ++i) sub[bound[i]] = combo[i];
      for (EntityId t = 0; t < n; ++t) {
        double fold = 1.0;
        for (const Atom& a : c.atoms) fold = tnorm(kind, fold, atom_score(a, sub, t));
        best(t) = std::max(best(t), fold);
      }
      // Advance the odometer over bound-variable assignments.
      std::size_t i = 0;
      for (; i < combo.size(); ++i) {
        if (++combo[i] < n) break;
        combo[i] = 0;
      }
      if (i == combo.size() && !combo.empty()) break;
      if (combo.empty()) break;
    }
    if (d == 0) {
      result = best;
    } else {
      for (EntityId t = 0; t < n; ++t) result(t) = tconorm(kind, result(t), best(t));
    }
  }
  return result;
}

DnfQuery random_template_query(const std::string& type, int n_entities, int n_relations,
                               std::mt19937_64& rng) {
  auto [na, nr] = template_arity(type);
  std::uniform_int_distribution<int> pe(0, n_entities - 1), pr(0, n_relations - 1);
  std::vector<EntityId> anchors;
  std::vector<RelationId> rels;
  for (int i = 0; i < na; ++i) anchors.push_back(static_cast<EntityId>(pe(rng)));
  for (int i = 0; i < nr; ++i) rels.push_back(static_cast<RelationId>(pr(rng)));
  return instantiate_template(type, anchors, rels);
}

}  // namespace

TEST_CASE("1p ranking equals calibrated object scores for any width") {
  EmbeddingModel m = test::random_model(12, 3, 8, 17);
  m.calibration = {Calibration::Logistic, 1.0};
  DnfQuery q = instantiate_template("1p", {4}, {2});
  const Eigen::VectorXd direct = calibrate(m, score_all_objects(m, 2, m.entity(4)));
  for (int width : {1, 3, 12}) {
    BeamConfig cfg;
    cfg.width = width;
    cfg.tnorm = TNormKind::Godel;
    AnswerRanking r = answer_beam(m, q, cfg);
    CHECK((r.scores - direct).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("full-width beam equals the enumeration oracle") {
  std::mt19937_64 rng(555);
  for (int round = 0; round < 6; ++round) {
    const int n = 8 + round;
    EmbeddingModel m = test::random_model(n, 4, 6, 1000 + round);
    m.calibration = {Calibration::Logistic, 1.0};
    for (const char* type : {"2p", "3p", "ip", "pi"}) {
      DnfQuery q = random_template_query(type, n, 4, rng);
      BeamConfig cfg;
      cfg.width = n;
      cfg.tnorm = TNormKind::Godel;
      AnswerRanking r = answer_beam(m, q, cfg);
      const Eigen::VectorXd oracle = enumeration_oracle(m, q, TNormKind::Godel);
      CHECK((r.scores - oracle).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("chain query follows the worked 2p procedure") {
  // Drug/protein toy: the top-b proteins for assoc(P,t) expand into at most
  // b*b drug candidates, ranked by the t-norm fold; the connected drug wins.
  auto kg = test::kg_from_lines({"d1 interacts p1", "p1 assoc t", "d2 interacts p2",
                                 "p2 assoc t2", "d3 interacts p3"});
  const Vocab& vocab = kg.vocab;
  const int n = static_cast<int>(vocab.num_entities());
  const int nr = static_cast<int>(vocab.num_relations());
  EmbeddingModel m = test::random_model(n, nr, n, 0, Scorer::DistMult, 0.0);
  m.calibration = {Calibration::Logistic, 1.0};

  EpfoQuery eq = parse_query("?D : exists P . interacts(D,P) & assoc(P,t)", vocab);
  DnfQuery q = to_dnf(eq);

  // Hand-wired DistMult model where each graph edge owns one dimension shared
  // by its endpoints and selected by its relation, so true edges score ~sigma(4)
  // and everything else ~sigma(0). Atoms are normalized to inv_assoc(t,P) and
  // inv_interacts(P,D).
  // dim 0: t~p1 (inv_assoc), dim 1: p1~d1 (inv_interacts),
  // dim 2: t2~p2, dim 3: p2~d2.
  auto E = [&](const char* name) { return vocab.entity(name); };
  m.entity_table(E("t"), 0) = 2.0;
  m.entity_table(E("p1"), 0) = 2.0;
  m.entity_table(E("p1"), 1) = 2.0;
  m.entity_table(E("d1"), 1) = 2.0;
  m.entity_table(E("t2"), 2) = 2.0;
  m.entity_table(E("p2"), 2) = 2.0;
  m.entity_table(E("p2"), 3) = 2.0;
  m.entity_table(E("d2"), 3) = 2.0;
  m.relation_table(vocab.relation("inv_assoc"), 0) = 1.0;
  m.relation_table(vocab.relation("inv_assoc"), 2) = 1.0;
  m.relation_table(vocab.relation("inv_interacts"), 1) = 1.0;
  m.relation_table(vocab.relation("inv_interacts"), 3) = 1.0;

  BeamConfig cfg;
  cfg.width = 2;
  cfg.tnorm = TNormKind::Product;
  AnswerRanking r = answer_beam(m, q, cfg);
  const auto order = ranked_entities(r.scores);
  CHECK(order[0] == E("d1"));
  // The top answer's trace goes through the connected protein.
  const BeamState& best = r.best_state[E("d1")];
  REQUIRE(best.substitution.size() == 2);
  const EntityId* p_assign = best.lookup(eq.bound_vars[0]);
  REQUIRE(p_assign != nullptr);
  CHECK(*p_assign == E("p1"));
  // With width b per step, a 2-hop chain explores at most b*b candidates.
  CHECK(best.trace.size() == 2);
}

TEST_CASE("monotone in beam width") {
  std::mt19937_64 rng(99);
  EmbeddingModel m = test::random_model(40, 5, 8, 4);
  m.calibration = {Calibration::Logistic, 1.0};
  for (const char* type : {"2p", "3p", "ip", "pi", "up"}) {
    for (int round = 0; round < 4; ++round) {
      DnfQuery q = random_template_query(type, 40, 5, rng);
      Eigen::VectorXd prev;
      for (int width : {4, 8, 16, 32}) {
        BeamConfig cfg;
        cfg.width = width;
        cfg.tnorm = TNormKind::Product;
        cfg.keep_traces = false;
        AnswerRanking r = answer_beam(m, q, cfg);
        if (prev.size() > 0) {
          CHECK((r.scores - prev).minCoeff() >= -1e-15);
        }
        prev = r.scores;
      }
    }
  }
}

TEST_CASE("godel ranking invariant under logistic temperature") {
  std::mt19937_64 rng(123);
  EmbeddingModel m = test::random_model(25, 4, 8, 31);
  for (const char* type : {"2p", "2i", "pi", "up"}) {
    DnfQuery q = random_template_query(type, 25, 4, rng);
    std::vector<std::vector<EntityId>> orders;
    for (double temp : {0.5, 1.0, 2.0}) {
      m.calibration = {Calibration::Logistic, temp};
      BeamConfig cfg;
      cfg.width = 6;
      cfg.tnorm = TNormKind::Godel;
      AnswerRanking r = answer_beam(m, q, cfg);
      orders.push_back(ranked_entities(r.scores));
    }
    CHECK(orders[0] == orders[1]);
    CHECK(orders[1] == orders[2]);
  }
}

TEST_CASE("beam state scores re-fold from their traces") {
  std::mt19937_64 rng(7);
  EmbeddingModel m = test::random_model(20, 4, 8, 77);
  m.calibration = {Calibration::Logistic, 1.0};
  for (const char* type : {"2p", "3p", "ip", "pi", "2i", "up"}) {
    DnfQuery q = random_template_query(type, 20, 4, rng);
    BeamConfig cfg;
    cfg.width = 5;
    cfg.tnorm = TNormKind::Product;
    AnswerRanking r = answer_beam(m, q, cfg);
    REQUIRE(r.has_traces());
    for (EntityId e = 0; e < 20; ++e) {
      const BeamState& s = r.best_state[e];
      double fold = 1.0;
      for (const TraceStep& step : s.trace) fold = tnorm(cfg.tnorm, fold, step.score);
      CHECK(std::abs(fold - s.score) < 1e-12);
    }
  }
}

TEST_CASE("disjuncts combine with the exact t-conorm") {
  std::mt19937_64 rng(20);
  EmbeddingModel m = test::random_model(18, 4, 6, 3);
  m.calibration = {Calibration::Logistic, 1.0};
  for (const char* type : {"2u", "up"}) {
    for (auto kind : {TNormKind::Godel, TNormKind::Product}) {
      DnfQuery q = random_template_query(type, 18, 4, rng);
      BeamConfig cfg;
      cfg.width = 18;
      cfg.tnorm = kind;
      AnswerRanking whole = answer_beam(m, q, cfg);
      // Answer each disjunct separately and conorm-combine.
      Eigen::VectorXd combined;
      for (std::size_t d = 0; d < q.disjuncts.size(); ++d) {
        DnfQuery part;
        part.var_names = q.var_names;
        part.disjuncts = {q.disjuncts[d]};
        AnswerRanking r = answer_beam(m, part, cfg);
        if (d == 0) {
          combined = r.scores;
        } else {
          for (Eigen::Index e = 0; e < combined.size(); ++e) {
            combined(e) = tconorm(kind, combined(e), r.scores(e));
          }
        }
      }
      CHECK((whole.scores - combined).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("explain emits ranked rows with assignments and correctness") {
  EmbeddingModel m = test::random_model(15, 4, 8, 13);
  m.calibration = {Calibration::Logistic, 1.0};
  DnfQuery q = instantiate_template("2p", {3}, {1, 2});
  BeamConfig cfg;
  cfg.width = 4;
  cfg.tnorm = TNormKind::Product;
  AnswerRanking r = answer_beam(m, q, cfg);

  ExplanationTable none = explain(r, 0);
  CHECK(none.rows.empty());

  std::vector<EntityId> gold{ranked_entities(r.scores)[0]};
  ExplanationTable table = explain(r, 9, gold);
  REQUIRE(table.rows.size() == 9);
  CHECK(table.has_gold);
  CHECK(table.rows[0].correct);
  CHECK(!table.rows[1].correct);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    CHECK(row.rank == static_cast<int>(i) + 1);
    // Re-scoring the listed assignment reproduces the reported score.
    double fold = 1.0;
    for (const TraceStep& step : row.atom_scores) fold = tnorm(cfg.tnorm, fold, step.score);
    CHECK(fold == doctest::Approx(row.score).epsilon(1e-12));
    REQUIRE(row.assignments.size() == 1);  // the single bound variable
  }

  // Clamped to |E|.
  CHECK(explain(r, 100).rows.size() == 15);
}

TEST_CASE("explain requires beam traces") {
  EmbeddingModel m = test::random_model(8, 2, 4, 1);
  DnfQuery q = instantiate_template("1p", {0}, {0});
  BeamConfig cfg;
  cfg.keep_traces = false;
  AnswerRanking r = answer_beam(m, q, cfg);
  CHECK_THROWS_WITH_AS(explain(r, 3), doctest::Contains("traces"), Error);
}
