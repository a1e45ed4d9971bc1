#ifndef KGQ_RANKING_HPP
#define KGQ_RANKING_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kgq/query.hpp"

namespace kgq {

// One resolved atom inside a beam state: which entity the atom's object was
// bound to and the calibrated score of that binding.
struct TraceStep {
  Atom atom;
  EntityId entity = 0;
  double score = 0.0;
};

// A partial (eventually total) variable-to-entity substitution, its running
// t-norm fold, and the per-atom trace that recomputes it.
struct BeamState {
  std::vector<std::pair<VarId, EntityId>> substitution;
  double score = 1.0;
  std::vector<TraceStep> trace;

  void bind(VarId v, EntityId e) { substitution.emplace_back(v, e); }
  const EntityId* lookup(VarId v) const {
    for (const auto& [var, ent] : substitution) {
      if (var == v) return &ent;
    }
    return nullptr;
  }
};

// Scores over every entity as the query target. Beam answering additionally
// keeps, per entity, the best-scoring substitution that produced its score
// (used by explain); the gradient-based answerer leaves `best_state` empty.
struct AnswerRanking {
  Eigen::VectorXd scores;
  std::vector<BeamState> best_state;
  std::vector<int> best_disjunct;

  bool has_traces() const { return !best_state.empty(); }
};

// Entity ids sorted by descending score, ties broken by ascending id.
std::vector<EntityId> ranked_entities(const Eigen::VectorXd& scores);

}  // namespace kgq

#endif
