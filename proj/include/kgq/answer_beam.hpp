#ifndef KGQ_ANSWER_BEAM_HPP
#define KGQ_ANSWER_BEAM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgq/fuzzy.hpp"
#include "kgq/model.hpp"
#include "kgq/ranking.hpp"

namespace kgq {

struct BeamConfig {
  int width = 16;  // top-b entities per expansion step
  TNormKind tnorm = TNormKind::Product;
  // Safety cap on live states for deep chains; the nine standard query
  // structures with width <= 256 never reach it.
  std::size_t max_states = std::size_t{1} << 18;
  bool keep_traces = true;
};

// Greedy top-b substitution along each conjunct's dependency order. For an
// atom p(c, V) whose subject is resolved and whose object V is an unresolved
// non-target variable, every state expands to its top-b entities under the
// calibrated object scores (Viterbi-style: states multiply rather than being
// re-pruned across parents, so widening the beam can only add candidates).
// Atoms with both ends resolved fold into the state score. Atoms touching the
// target are applied last: every entity is scored against every surviving
// state and takes the max over states; disjuncts combine with the dual
// t-conorm. Deterministic, ties by ascending entity id.
AnswerRanking answer_beam(const EmbeddingModel& m, const DnfQuery& q, const BeamConfig& cfg);

struct ExplanationRow {
  EntityId entity = 0;
  int rank = 0;
  double score = 0.0;
  bool correct = false;  // meaningful only when gold answers were supplied
  std::vector<std::pair<VarId, EntityId>> assignments;  // bound variables only
  std::vector<TraceStep> atom_scores;
};

struct ExplanationTable {
  std::vector<ExplanationRow> rows;
  std::vector<VarId> bound_vars;
  bool has_gold = false;
};

// Intermediate assignments, rank and per-atom scores for the top_n ranked
// entities (clamped to |E|). Requires a ranking that kept traces.
ExplanationTable explain(const AnswerRanking& ranking, int top_n,
                         const std::optional<std::vector<EntityId>>& gold = std::nullopt);

std::string explanation_to_text(const ExplanationTable& table, const DnfQuery& q,
                                const Vocab& vocab);
nlohmann::json explanation_to_json(const ExplanationTable& table, const DnfQuery& q,
                                   const Vocab& vocab);

}  // namespace kgq

#endif
