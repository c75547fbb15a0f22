#include "morphwing/expr/dual.hpp"

namespace morphwing::expr {

DualResult eval_dual(const ExprGraph& graph, std::span<const NodeId> outputs,
                     std::span<const double> inputs, std::span<const double> seed) {
  if (inputs.size() != graph.num_symbols()) {
    throw std::invalid_argument("eval_dual: every input symbol must be bound");
  }
  if (seed.size() != graph.num_symbols()) {
    throw std::invalid_argument("eval_dual: seed must have one entry per input symbol");
  }
  const auto live = reachable_nodes(graph, outputs);
  std::vector<Dual> v(graph.size());
  for (NodeId id : live) {
    const Node& n = graph.node(id);
    switch (n.op) {
      case Op::Const:
        v[id] = {n.value, 0.0};
        continue;
      case Op::Input: {
        const auto k = static_cast<std::size_t>(n.exponent);
        v[id] = {inputs[k], seed[k]};
        continue;
      }
      default:
        break;
    }
    const Dual a = v[n.lhs];
    const Dual b = is_binary(n.op) ? v[n.rhs] : Dual{};
    // Values go through the shared kernel (domain guards included) so the
    // primal result matches every other evaluator exactly.
    const double value = apply_op(n.op, a.value, b.value, n.exponent);
    double d = 0.0;
    switch (n.op) {
      case Op::Add: d = a.deriv + b.deriv; break;
      case Op::Sub: d = a.deriv - b.deriv; break;
      case Op::Mul: d = a.deriv * b.value + a.value * b.deriv; break;
      case Op::Div: d = (a.deriv - value * b.deriv) / b.value; break;
      case Op::Neg: d = -a.deriv; break;
      case Op::Sin: d = std::cos(a.value) * a.deriv; break;
      case Op::Cos: d = -std::sin(a.value) * a.deriv; break;
      case Op::Exp: d = value * a.deriv; break;
      case Op::Log: d = a.deriv / a.value; break;
      case Op::PowInt:
        if (n.exponent == 0) break;
        d = static_cast<double>(n.exponent) * apply_op(Op::PowInt, a.value, 0.0, n.exponent - 1) *
            a.deriv;
        break;
      case Op::Sqrt: d = a.deriv / (2.0 * value); break;
      default: break;
    }
    v[id] = {value, d};
  }
  DualResult result;
  for (NodeId id : outputs) {
    result.values.push_back(v[id].value);
    result.derivatives.push_back(v[id].deriv);
  }
  return result;
}

}  // namespace morphwing::expr
