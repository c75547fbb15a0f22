#include "morphwing/expr/graph.hpp"

namespace morphwing::expr {

std::vector<NodeId> differentiate(ExprGraph& graph, NodeId output, std::span<const NodeId> wrt) {
  if (output >= graph.size()) throw std::out_of_range("differentiate: output node does not exist");
  for (NodeId w : wrt) {
    if (!graph.is_input(w)) {
      throw std::invalid_argument("differentiate: can only differentiate with respect to input symbols");
    }
  }

  const std::size_t limit = static_cast<std::size_t>(output) + 1;
  std::vector<std::uint8_t> depends(limit, 0);
  for (NodeId w : wrt) {
    if (w < limit) depends[w] = 1;
  }
  for (std::size_t i = 0; i < limit; ++i) {
    const Node& n = graph.node(static_cast<NodeId>(i));
    if (is_binary(n.op)) {
      depends[i] = depends[n.lhs] | depends[n.rhs];
    } else if (is_unary(n.op)) {
      depends[i] = depends[n.lhs];
    }
  }

  // Adjoints, kNoNode meaning structurally zero.
  std::vector<NodeId> adjoint(limit, kNoNode);
  auto accumulate = [&](NodeId target, const Sym& contribution) {
    if (!depends[target] || contribution.is_zero()) return;
    if (adjoint[target] == kNoNode) {
      adjoint[target] = contribution.id();
    } else {
      adjoint[target] = (Sym(graph, adjoint[target]) + contribution).id();
    }
  };

  if (depends[output]) adjoint[output] = graph.constant(1.0);

  for (std::size_t i = limit; i-- > 0;) {
    if (adjoint[i] == kNoNode || !depends[i]) continue;
    const Node n = graph.node(static_cast<NodeId>(i));  // copy: graph grows below
    const Sym bar(graph, adjoint[i]);
    const Sym self(graph, static_cast<NodeId>(i));
    switch (n.op) {
      case Op::Const:
      case Op::Input:
        break;
      case Op::Add:
        accumulate(n.lhs, bar);
        accumulate(n.rhs, bar);
        break;
      case Op::Sub:
        accumulate(n.lhs, bar);
        if (depends[n.rhs]) accumulate(n.rhs, -bar);
        break;
      case Op::Mul: {
        const Sym lhs(graph, n.lhs);
        const Sym rhs(graph, n.rhs);
        if (depends[n.lhs]) accumulate(n.lhs, bar * rhs);
        if (depends[n.rhs]) accumulate(n.rhs, bar * lhs);
        break;
      }
      case Op::Div: {
        const Sym rhs(graph, n.rhs);
        if (depends[n.lhs]) accumulate(n.lhs, bar / rhs);
        // d(a/b)/db = -(a/b)/b
        if (depends[n.rhs]) accumulate(n.rhs, -(bar * self / rhs));
        break;
      }
      case Op::Neg:
        accumulate(n.lhs, -bar);
        break;
      case Op::Sin:
        accumulate(n.lhs, bar * cos(Sym(graph, n.lhs)));
        break;
      case Op::Cos:
        accumulate(n.lhs, -(bar * sin(Sym(graph, n.lhs))));
        break;
      case Op::Exp:
        accumulate(n.lhs, bar * self);
        break;
      case Op::Log:
        accumulate(n.lhs, bar / Sym(graph, n.lhs));
        break;
      case Op::PowInt: {
        const Sym base(graph, n.lhs);
        const Sym local = static_cast<double>(n.exponent) * powi(base, n.exponent - 1);
        accumulate(n.lhs, bar * local);
        break;
      }
      case Op::Sqrt:
        accumulate(n.lhs, bar * (0.5 / self));
        break;
    }
  }

  std::vector<NodeId> result;
  result.reserve(wrt.size());
  for (NodeId w : wrt) {
    if (w < limit && adjoint[w] != kNoNode) {
      result.push_back(adjoint[w]);
    } else {
      result.push_back(graph.constant(0.0));
    }
  }
  return result;
}

}  // namespace morphwing::expr
