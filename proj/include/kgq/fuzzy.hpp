#ifndef KGQ_FUZZY_HPP
#define KGQ_FUZZY_HPP

#include <span>
#include <string>

namespace kgq {

// A t-norm generalizes conjunction on [0,1]; each kind is paired with the
// complementary t-conorm 1 - T(1-x, 1-y) for disjunction.
enum class TNormKind { Godel, Product, Lukasiewicz };

const char* to_string(TNormKind kind);
TNormKind tnorm_from_string(const std::string& name);

// Godel -> min(x,y); Product -> x*y; Lukasiewicz -> max(0, x+y-1).
// Throws std::domain_error if an argument is outside [0,1].
double tnorm(TNormKind kind, double x, double y);

// Dual t-conorm, computed exactly as 1 - tnorm(1-x, 1-y).
double tconorm(TNormKind kind, double x, double y);

// Left folds over a nonempty score list. Both operators are associative, so
// the fold order does not change the result. Empty input throws: conjunctions
// and disjunctions in this codebase are never empty, and the t-norms have no
// shared neutral element worth special-casing.
double fold_tnorm(TNormKind kind, std::span<const double> scores);
double fold_tconorm(TNormKind kind, std::span<const double> scores);

struct BinaryGrad {
  double dx = 0.0;
  double dy = 0.0;
};

// Partial derivatives of the binary operators, used by the gradient-based
// answerer. min/max kinks resolve toward the first argument on ties.
BinaryGrad tnorm_grad(TNormKind kind, double x, double y);
BinaryGrad tconorm_grad(TNormKind kind, double x, double y);

}  // namespace kgq

#endif
