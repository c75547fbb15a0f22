#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "morphwing/expr/graph.hpp"

namespace morphwing::expr {

/// Forward-mode value/derivative pair along a single seed direction.
struct Dual {
  double value = 0.0;
  double deriv = 0.0;

  friend Dual operator+(Dual a, Dual b) { return {a.value + b.value, a.deriv + b.deriv}; }
  friend Dual operator-(Dual a, Dual b) { return {a.value - b.value, a.deriv - b.deriv}; }
  friend Dual operator-(Dual a) { return {-a.value, -a.deriv}; }
  friend Dual operator*(Dual a, Dual b) {
    return {a.value * b.value, a.deriv * b.value + a.value * b.deriv};
  }
  friend Dual operator/(Dual a, Dual b) {
    const double q = a.value / b.value;
    return {q, (a.deriv - q * b.deriv) / b.value};
  }
};

inline Dual sin(Dual x) { return {std::sin(x.value), std::cos(x.value) * x.deriv}; }
inline Dual cos(Dual x) { return {std::cos(x.value), -std::sin(x.value) * x.deriv}; }
inline Dual exp(Dual x) {
  const double e = std::exp(x.value);
  return {e, e * x.deriv};
}
inline Dual log(Dual x) { return {std::log(x.value), x.deriv / x.value}; }
inline Dual sqrt(Dual x) {
  const double s = std::sqrt(x.value);
  return {s, x.deriv / (2.0 * s)};
}

struct DualResult {
  std::vector<double> values;
  std::vector<double> derivatives;
};

/// Evaluates `outputs` with dual numbers. `inputs` and `seed` are indexed by
/// symbol ordinal; the derivative is the directional derivative along `seed`.
DualResult eval_dual(const ExprGraph& graph, std::span<const NodeId> outputs,
                     std::span<const double> inputs, std::span<const double> seed);

}  // namespace morphwing::expr
