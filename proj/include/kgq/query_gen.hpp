#ifndef KGQ_QUERY_GEN_HPP
#define KGQ_QUERY_GEN_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kgq/kg.hpp"
#include "kgq/query.hpp"

namespace kgq {

// The nine query structures: projection chains, intersections, and unions.
inline constexpr std::array<std::string_view, 9> kQueryTypes = {
    "1p", "2p", "3p", "2i", "3i", "ip", "pi", "2u", "up"};

bool is_query_type(const std::string& name);

// Number of (anchors, relations) a template consumes.
std::pair<int, int> template_arity(const std::string& type);

// Builds the fixed atom pattern of a template over concrete anchors and
// relations (e.g. pi => p(a,V) & q(V,T) & r(b,T)).
DnfQuery instantiate_template(const std::string& type, const std::vector<EntityId>& anchors,
                              const std::vector<RelationId>& relations);

// Exact answer set by exhaustive matching over the adjacency index of the
// selected split union. Sorted.
std::vector<EntityId> symbolic_answers(const KnowledgeGraph& kg, Graph g, const DnfQuery& q);

enum class QuerySplit { Valid, Test };

// Full graph for the split: validation queries see train+valid, test queries
// see everything.
Graph full_graph_of(QuerySplit split);

struct GeneratedQuery {
  std::string type;
  std::vector<EntityId> anchors;
  std::vector<RelationId> relations;
  std::vector<EntityId> answers_full;   // sorted
  std::vector<EntityId> answers_train;  // sorted, strict subset of answers_full

  DnfQuery query() const { return instantiate_template(type, anchors, relations); }
  std::vector<EntityId> hard_answers() const;  // answers_full \ answers_train
};

// Samples `count` distinct queries of one template by backward random walks
// from a sampled answer over the split's full graph. Queries whose full-graph
// answers already follow from the train graph are discarded, so every emitted
// query has at least one hard answer. Deterministic per seed. Throws when a
// query cannot be sampled within the retry budget.
std::vector<GeneratedQuery> sample_queries(const KnowledgeGraph& kg, const std::string& type,
                                           int count, std::uint64_t seed, QuerySplit split);

// JSON-lines: one {type, anchors, relations, target_answers_full,
// target_answers_train} object per line.
void save_queries_jsonl(const std::vector<GeneratedQuery>& queries,
                        const std::filesystem::path& path);
std::vector<GeneratedQuery> load_queries_jsonl(const std::filesystem::path& path);

}  // namespace kgq

#endif
