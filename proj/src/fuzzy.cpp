#include "kgq/fuzzy.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgq {

const char* to_string(TNormKind kind) {
  switch (kind) {
    case TNormKind::Godel: return "godel";
    case TNormKind::Product: return "product";
    case TNormKind::Lukasiewicz: return "lukasiewicz";
  }
  return "?";
}

TNormKind tnorm_from_string(const std::string& name) {
  if (name == "godel" || name == "min") return TNormKind::Godel;
  if (name == "product" || name == "prod") return TNormKind::Product;
  if (name == "lukasiewicz" || name == "luk") return TNormKind::Lukasiewicz;
  throw std::invalid_argument("unknown t-norm '" + name +
                              "' (expected godel, product or lukasiewicz)");
}

namespace {

void check_unit(double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::domain_error("t-norm argument " + std::to_string(v) +
                            " outside [0,1]");
  }
}

}  // namespace

double tnorm(TNormKind kind, double x, double y) {
  check_unit(x);
  check_unit(y);
  switch (kind) {
    case TNormKind::Godel: return std::min(x, y);
    case TNormKind::Product: return x * y;
    case TNormKind::Lukasiewicz: return std::max(0.0, x + y - 1.0);
  }
  return 0.0;
}

double tconorm(TNormKind kind, double x, double y) {
  check_unit(x);
  check_unit(y);
  return 1.0 - tnorm(kind, 1.0 - x, 1.0 - y);
}

double fold_tnorm(TNormKind kind, std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("fold_tnorm: empty score list");
  double acc = scores[0];
  check_unit(acc);
  for (std::size_t i = 1; i < scores.size(); ++i) acc = tnorm(kind, acc, scores[i]);
  return acc;
}

double fold_tconorm(TNormKind kind, std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("fold_tconorm: empty score list");
  double acc = scores[0];
  check_unit(acc);
  for (std::size_t i = 1; i < scores.size(); ++i) acc = tconorm(kind, acc, scores[i]);
  return acc;
}

BinaryGrad tnorm_grad(TNormKind kind, double x, double y) {
  switch (kind) {
    case TNormKind::Godel:
      return x <= y ? BinaryGrad{1.0, 0.0} : BinaryGrad{0.0, 1.0};
    case TNormKind::Product:
      return {y, x};
    case TNormKind::Lukasiewicz:
      return x + y - 1.0 > 0.0 ? BinaryGrad{1.0, 1.0} : BinaryGrad{0.0, 0.0};
  }
  return {};
}

BinaryGrad tconorm_grad(TNormKind kind, double x, double y) {
  // d/dx [1 - T(1-x, 1-y)] = dT/du at (1-x, 1-y).
  BinaryGrad g = tnorm_grad(kind, 1.0 - x, 1.0 - y);
  return {g.dx, g.dy};
}

}  // namespace kgq
