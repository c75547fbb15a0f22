#include <bit>
#include <unordered_map>

#include "morphwing/expr/graph.hpp"

namespace morphwing::expr {

namespace {

struct NodeKey {
  Op op;
  NodeId lhs;
  NodeId rhs;
  std::uint64_t value_bits;
  int exponent;

  bool operator==(const NodeKey&) const = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.op);
    auto mix = [&h](std::uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    mix(k.lhs);
    mix(k.rhs);
    mix(k.value_bits);
    mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.exponent)));
    return static_cast<std::size_t>(h);
  }
};

bool is_commutative(Op op) { return op == Op::Add || op == Op::Mul; }

}  // namespace

std::vector<NodeId> CseResult::map(std::span<const NodeId> old) const {
  std::vector<NodeId> out;
  out.reserve(old.size());
  for (NodeId id : old) out.push_back(remap.at(id));
  return out;
}

CseResult cse(const ExprGraph& graph, std::span<const NodeId> roots) {
  const auto& nodes = graph.nodes();
  std::vector<std::uint8_t> keep(nodes.size(), 1);
  if (!roots.empty()) {
    std::fill(keep.begin(), keep.end(), 0);
    for (NodeId id : reachable_nodes(graph, roots)) keep[id] = 1;
    for (NodeId id : graph.symbol_nodes()) keep[id] = 1;
  }

  CseResult result;
  result.remap.assign(nodes.size(), kNoNode);
  ExprGraph& out = result.graph;
  std::unordered_map<NodeKey, NodeId, NodeKeyHash> interned;
  interned.reserve(nodes.size());

  auto intern_constant = [&](double v) {
    NodeKey key{Op::Const, kNoNode, kNoNode, std::bit_cast<std::uint64_t>(v), 0};
    auto [it, inserted] = interned.try_emplace(key, kNoNode);
    if (inserted) it->second = out.constant(v);
    return it->second;
  };

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!keep[i]) continue;
    const Node& n = nodes[i];
    if (n.op == Op::Input) {
      result.remap[i] = out.symbol(graph.symbol_names()[graph.input_ordinal(static_cast<NodeId>(i))]);
      continue;
    }
    if (n.op == Op::Const) {
      result.remap[i] = intern_constant(n.value);
      continue;
    }
    NodeId lhs = result.remap[n.lhs];
    NodeId rhs = is_binary(n.op) ? result.remap[n.rhs] : kNoNode;
    if (is_commutative(n.op) && rhs < lhs) std::swap(lhs, rhs);

    const bool lhs_const = out.node(lhs).op == Op::Const;
    const bool rhs_const = rhs == kNoNode || out.node(rhs).op == Op::Const;
    if (lhs_const && rhs_const) {
      try {
        const double a = out.node(lhs).value;
        const double b = rhs == kNoNode ? 0.0 : out.node(rhs).value;
        result.remap[i] = intern_constant(apply_op(n.op, a, b, n.exponent));
        continue;
      } catch (const EvalError&) {
        // Leave the node in place so the domain error surfaces at evaluation.
      }
    }

    NodeKey key{n.op, lhs, rhs, 0, n.op == Op::PowInt ? n.exponent : 0};
    auto [it, inserted] = interned.try_emplace(key, kNoNode);
    if (inserted) {
      Node copy = n;
      copy.lhs = lhs;
      copy.rhs = rhs;
      it->second = out.append(copy);
    }
    result.remap[i] = it->second;
  }
  if (roots.empty()) return result;

  // Folding leaves intermediate constants behind; keep only what the roots use.
  std::vector<NodeId> new_roots = result.map(roots);
  std::vector<std::uint8_t> used(out.size(), 0);
  for (NodeId id : reachable_nodes(out, new_roots)) used[id] = 1;
  for (NodeId id : out.symbol_nodes()) used[id] = 1;
  CseResult compact;
  std::vector<NodeId> moved(out.size(), kNoNode);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!used[i]) continue;
    const Node& n = out.node(static_cast<NodeId>(i));
    if (n.op == Op::Input) {
      moved[i] = compact.graph.symbol(out.symbol_names()[out.input_ordinal(static_cast<NodeId>(i))]);
      continue;
    }
    Node copy = n;
    if (is_unary(n.op) || is_binary(n.op)) copy.lhs = moved[n.lhs];
    if (is_binary(n.op)) copy.rhs = moved[n.rhs];
    moved[i] = compact.graph.append(copy);
  }
  compact.remap.assign(nodes.size(), kNoNode);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (result.remap[i] != kNoNode) compact.remap[i] = moved[result.remap[i]];
  }
  return compact;
}

}  // namespace morphwing::expr
