#ifndef KGQ_ANSWER_CONTINUOUS_HPP
#define KGQ_ANSWER_CONTINUOUS_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "kgq/fuzzy.hpp"
#include "kgq/model.hpp"
#include "kgq/ranking.hpp"

namespace kgq {

struct AdamParams {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ContinuousConfig {
  AdamParams adam;
  int max_iters = 1000;
  TNormKind tnorm = TNormKind::Product;
  std::uint64_t init_seed = 0;
  // Stop once the best objective improved by less than convergence_tol over
  // the trailing window.
  double convergence_tol = 1e-6;
  int convergence_window = 25;
  int num_restarts = 1;
};

using VarEmbeddings = std::map<VarId, Eigen::VectorXd>;

// Fuzzy query score for one embedding assignment of all variables (target
// included): each atom is scored raw and squashed with the logistic map (the
// smooth calibration; a model configured for min-max calibration still uses
// its logistic temperature here), conjunctions fold with the t-norm and
// disjuncts with the dual t-conorm. Differentiable in every variable
// embedding. Throws if a variable of the query has no embedding.
double co_objective(const EmbeddingModel& m, const DnfQuery& q, const VarEmbeddings& embs,
                    TNormKind tnorm);

// Same value, plus d objective / d embedding for every variable.
double co_objective_grad(const EmbeddingModel& m, const DnfQuery& q, const VarEmbeddings& embs,
                         TNormKind tnorm, VarEmbeddings* grads);

struct ContinuousDiag {
  // One history per disjunct per restart, in run order.
  std::vector<std::vector<double>> objective_history;
};

// Maximizes the fuzzy score over variable embeddings with Adam (one
// independent run per disjunct; restarts keep the best final objective), then
// freezes the bound-variable embeddings and scores every entity as the
// target. Queries without bound variables skip the optimization entirely, so
// their scores equal direct fuzzy evaluation.
AnswerRanking answer_continuous(const EmbeddingModel& m, const DnfQuery& q,
                                const ContinuousConfig& cfg, ContinuousDiag* diag = nullptr);

}  // namespace kgq

#endif
