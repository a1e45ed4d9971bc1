#include "kgq/query_gen.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace kgq {

bool is_query_type(const std::string& name) {
  return std::find(kQueryTypes.begin(), kQueryTypes.end(), name) != kQueryTypes.end();
}

std::pair<int, int> template_arity(const std::string& type) {
  if (type == "1p") return {1, 1};
  if (type == "2p") return {1, 2};
  if (type == "3p") return {1, 3};
  if (type == "2i") return {2, 2};
  if (type == "3i") return {3, 3};
  if (type == "ip") return {2, 3};
  if (type == "pi") return {2, 3};
  if (type == "2u") return {2, 2};
  if (type == "up") return {2, 3};
  throw Error("unknown query type '" + type + "'");
}

DnfQuery instantiate_template(const std::string& type, const std::vector<EntityId>& anchors,
                              const std::vector<RelationId>& relations) {
  auto [na, nr] = template_arity(type);
  if (static_cast<int>(anchors.size()) != na || static_cast<int>(relations.size()) != nr) {
    throw Error("template " + type + " expects " + std::to_string(na) + " anchors and " +
                std::to_string(nr) + " relations");
  }

  const Term T = Term::var(kTargetVar);
  const Term V1 = Term::var(1);
  const Term V2 = Term::var(2);
  auto A = [&](int i) { return Term::anchor(anchors[i]); };
  const auto& r = relations;

  DnfQuery q;
  q.var_names = {"T", "V1", "V2"};
  if (type == "1p") {
    q.disjuncts = {Conjunction{{{r[0], A(0), T}}}};
  } else if (type == "2p") {
    q.disjuncts = {Conjunction{{{r[0], A(0), V1}, {r[1], V1, T}}}};
  } else if (type == "3p") {
    q.disjuncts = {Conjunction{{{r[0], A(0), V1}, {r[1], V1, V2}, {r[2], V2, T}}}};
  } else if (type == "2i") {
    q.disjuncts = {Conjunction{{{r[0], A(0), T}, {r[1], A(1), T}}}};
  } else if (type == "3i") {
    q.disjuncts = {Conjunction{{{r[0], A(0), T}, {r[1], A(1), T}, {r[2], A(2), T}}}};
  } else if (type == "ip") {
    q.disjuncts = {Conjunction{{{r[0], A(0), V1}, {r[1], A(1), V1}, {r[2], V1, T}}}};
  } else if (type == "pi") {
    q.disjuncts = {Conjunction{{{r[0], A(0), V1}, {r[1], V1, T}, {r[2], A(1), T}}}};
  } else if (type == "2u") {
    q.disjuncts = {Conjunction{{{r[0], A(0), T}}}, Conjunction{{{r[1], A(1), T}}}};
  } else if (type == "up") {
    q.disjuncts = {Conjunction{{{r[0], A(0), V1}, {r[2], V1, T}}},
                   Conjunction{{{r[1], A(1), V1}, {r[2], V1, T}}}};
  } else {
    throw Error("unknown query type '" + type + "'");
  }
  return q;
}

namespace {

void match_conjunct(const KnowledgeGraph& kg, Graph g, const std::vector<Atom>& ordered,
                    std::size_t next, std::vector<std::pair<VarId, EntityId>>& assignment,
                    std::set<EntityId>& out) {
  if (next == ordered.size()) {
    for (const auto& [v, e] : assignment) {
      if (v == kTargetVar) out.insert(e);
    }
    return;
  }
  const Atom& atom = ordered[next];
  EntityId subject;
  if (atom.subject.is_anchor()) {
    subject = atom.subject.id;
  } else {
    subject = 0;
    bool found = false;
    for (const auto& [v, e] : assignment) {
      if (v == atom.subject.id) {
        subject = e;
        found = true;
        break;
      }
    }
    if (!found) throw Error("internal error: unresolved subject during symbolic matching");
  }

  const EntityId* bound = nullptr;
  for (const auto& [v, e] : assignment) {
    if (v == atom.object.id) bound = &e;
  }
  if (bound) {
    if (kg.has_triple(g, subject, atom.p, *bound)) {
      match_conjunct(kg, g, ordered, next + 1, assignment, out);
    }
    return;
  }
  for (EntityId o : kg.objects(g, subject, atom.p)) {
    assignment.emplace_back(atom.object.id, o);
    match_conjunct(kg, g, ordered, next + 1, assignment, out);
    assignment.pop_back();
  }
}

}  // namespace

std::vector<EntityId> symbolic_answers(const KnowledgeGraph& kg, Graph g, const DnfQuery& q) {
  std::set<EntityId> out;
  for (const Conjunction& c : q.disjuncts) {
    std::vector<Atom> ordered = topo_order(c);
    std::vector<std::pair<VarId, EntityId>> assignment;
    match_conjunct(kg, g, ordered, 0, assignment, out);
  }
  return {out.begin(), out.end()};
}

Graph full_graph_of(QuerySplit split) {
  return split == QuerySplit::Valid ? Graph::TrainValid : Graph::Full;
}

std::vector<EntityId> GeneratedQuery::hard_answers() const {
  std::vector<EntityId> hard;
  std::set_difference(answers_full.begin(), answers_full.end(), answers_train.begin(),
                      answers_train.end(), std::back_inserter(hard));
  return hard;
}

namespace {

struct Walker {
  const KnowledgeGraph& kg;
  Graph g;
  std::mt19937_64& rng;

  EntityId random_entity_with_edges() {
    const auto n = kg.vocab.num_entities();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int tries = 0; tries < 200; ++tries) {
      EntityId e = static_cast<EntityId>(pick(rng));
      if (!kg.out_edges(g, e).empty()) return e;
    }
    throw Error("graph has no edges to sample from");
  }

  // A uniformly chosen incoming edge of x, returned as (p, s) with p(s, x)
  // holding in the graph; reciprocal triples make every incoming edge of x
  // visible as an outgoing one.
  bool backward_step(EntityId x, RelationId& p, EntityId& s) {
    const auto& edges = kg.out_edges(g, x);
    if (edges.empty()) return false;
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    const auto& [r, y] = edges[pick(rng)];
    p = kg.vocab.reciprocal(r);
    s = y;
    return true;
  }
};

// One sampling attempt; returns false when a structural constraint (distinct
// incoming edges etc.) cannot be met from the sampled answer.
bool try_sample(Walker& w, const std::string& type, GeneratedQuery& out) {
  out.anchors.clear();
  out.relations.clear();
  const EntityId t = w.random_entity_with_edges();
  RelationId p, q, r;
  EntityId a, b, v1, v2;

  auto distinct_incoming = [&](EntityId node, int count, std::vector<RelationId>& rels,
                               std::vector<EntityId>& subs) {
    std::set<std::pair<RelationId, EntityId>> seen;
    for (int tries = 0; tries < 30 && static_cast<int>(seen.size()) < count; ++tries) {
      RelationId rel;
      EntityId sub;
      if (!w.backward_step(node, rel, sub)) return false;
      seen.emplace(rel, sub);
    }
    if (static_cast<int>(seen.size()) < count) return false;
    rels.clear();
    subs.clear();
    for (const auto& [rel, sub] : seen) {
      if (static_cast<int>(rels.size()) == count) break;
      rels.push_back(rel);
      subs.push_back(sub);
    }
    return true;
  };

  if (type == "1p") {
    if (!w.backward_step(t, p, a)) return false;
    out.anchors = {a};
    out.relations = {p};
  } else if (type == "2p") {
    if (!w.backward_step(t, q, v1)) return false;
    if (!w.backward_step(v1, p, a)) return false;
    out.anchors = {a};
    out.relations = {p, q};
  } else if (type == "3p") {
    if (!w.backward_step(t, r, v2)) return false;
    if (!w.backward_step(v2, q, v1)) return false;
    if (!w.backward_step(v1, p, a)) return false;
    out.anchors = {a};
    out.relations = {p, q, r};
  } else if (type == "2i" || type == "2u") {
    std::vector<RelationId> rels;
    std::vector<EntityId> subs;
    if (!distinct_incoming(t, 2, rels, subs)) return false;
    out.anchors = subs;
    out.relations = rels;
  } else if (type == "3i") {
    std::vector<RelationId> rels;
    std::vector<EntityId> subs;
    if (!distinct_incoming(t, 3, rels, subs)) return false;
    out.anchors = subs;
    out.relations = rels;
  } else if (type == "ip") {
    if (!w.backward_step(t, r, v1)) return false;
    std::vector<RelationId> rels;
    std::vector<EntityId> subs;
    if (!distinct_incoming(v1, 2, rels, subs)) return false;
    out.anchors = subs;
    out.relations = {rels[0], rels[1], r};
  } else if (type == "pi") {
    if (!w.backward_step(t, q, v1)) return false;
    if (!w.backward_step(v1, p, a)) return false;
    for (int tries = 0;; ++tries) {
      if (tries == 30) return false;
      if (!w.backward_step(t, r, b)) return false;
      if (r != q || b != v1) break;  // keep the two target atoms distinct
    }
    out.anchors = {a, b};
    out.relations = {p, q, r};
  } else if (type == "up") {
    if (!w.backward_step(t, r, v1)) return false;
    std::vector<RelationId> rels;
    std::vector<EntityId> subs;
    if (!distinct_incoming(v1, 2, rels, subs)) return false;
    out.anchors = subs;
    out.relations = {rels[0], rels[1], r};
  } else {
    throw Error("unknown query type '" + type + "'");
  }
  return true;
}

}  // namespace

std::vector<GeneratedQuery> sample_queries(const KnowledgeGraph& kg, const std::string& type,
                                           int count, std::uint64_t seed, QuerySplit split) {
  if (!is_query_type(type)) throw Error("unknown query type '" + type + "'");
  if (count < 1) throw Error("sample_queries: count must be >= 1");

  std::mt19937_64 rng(seed);
  Walker walker{kg, full_graph_of(split), rng};

  constexpr int kRetryBudget = 100;
  std::vector<GeneratedQuery> queries;
  std::set<std::pair<std::vector<EntityId>, std::vector<RelationId>>> seen;

  while (static_cast<int>(queries.size()) < count) {
    bool produced = false;
    for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
      GeneratedQuery gq;
      gq.type = type;
      if (!try_sample(walker, type, gq)) continue;
      if (seen.count({gq.anchors, gq.relations})) continue;

      const DnfQuery q = gq.query();
      gq.answers_full = symbolic_answers(kg, walker.g, q);
      gq.answers_train = symbolic_answers(kg, Graph::Train, q);
      // Queries answerable from the train graph alone need no missing-edge
      // reasoning; drop them.
      if (gq.answers_full == gq.answers_train) continue;

      seen.insert({gq.anchors, gq.relations});
      queries.push_back(std::move(gq));
      produced = true;
      break;
    }
    if (!produced) {
      throw Error("could not sample a '" + type + "' query with hard answers within " +
                  std::to_string(kRetryBudget) + " attempts (template may be unsatisfiable" +
                  " on this graph)");
    }
  }
  return queries;
}

void save_queries_jsonl(const std::vector<GeneratedQuery>& queries,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write query file: " + path.string());
  for (const GeneratedQuery& q : queries) {
    nlohmann::json j;
    j["type"] = q.type;
    j["anchors"] = q.anchors;
    j["relations"] = q.relations;
    j["target_answers_full"] = q.answers_full;
    j["target_answers_train"] = q.answers_train;
    out << j.dump() << '\n';
  }
}

std::vector<GeneratedQuery> load_queries_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open query file: " + path.string());
  std::vector<GeneratedQuery> queries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    GeneratedQuery q;
    q.type = j.at("type").get<std::string>();
    if (!is_query_type(q.type)) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": unknown query type '" +
                  q.type + "'");
    }
    q.anchors = j.at("anchors").get<std::vector<EntityId>>();
    q.relations = j.at("relations").get<std::vector<RelationId>>();
    q.answers_full = j.at("target_answers_full").get<std::vector<EntityId>>();
    q.answers_train = j.at("target_answers_train").get<std::vector<EntityId>>();
    auto [na, nr] = template_arity(q.type);
    if (static_cast<int>(q.anchors.size()) != na ||
        static_cast<int>(q.relations.size()) != nr) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": arity mismatch for type " +
                  q.type);
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

}  // namespace kgq
