#include "kgq/ranking.hpp"

#include <algorithm>
#include <numeric>

namespace kgq {

std::vector<EntityId> ranked_entities(const Eigen::VectorXd& scores) {
  std::vector<EntityId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](EntityId a, EntityId b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  return ids;
}

}  // namespace kgq
