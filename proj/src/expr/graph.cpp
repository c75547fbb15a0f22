#include "morphwing/expr/graph.hpp"

#include <algorithm>
#include <sstream>

namespace morphwing::expr {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Input: return "input";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::PowInt: return "powi";
    case Op::Sqrt: return "sqrt";
  }
  return "?";
}

void throw_domain_error(Op op, double argument) {
  std::ostringstream msg;
  msg << "evaluation domain error in " << op_name(op) << " (argument " << argument << ")";
  throw EvalError(msg.str(), op, argument);
}

NodeId ExprGraph::symbol(std::string name) {
  if (name.empty()) throw std::invalid_argument("symbol name must be non-empty");
  if (symbol_index_.contains(name)) {
    throw std::invalid_argument("duplicate symbol '" + name + "'");
  }
  Node n;
  n.op = Op::Input;
  n.exponent = static_cast<int>(symbol_nodes_.size());
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(n);
  symbol_index_.emplace(name, id);
  symbol_names_.push_back(std::move(name));
  symbol_nodes_.push_back(id);
  return id;
}

NodeId ExprGraph::constant(double value) {
  Node n;
  n.op = Op::Const;
  n.value = value;
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

void ExprGraph::check_operand(NodeId id) const {
  if (id >= nodes_.size()) throw std::out_of_range("operand refers to a node that does not exist");
}

NodeId ExprGraph::unary(Op op, NodeId operand) {
  if (!is_unary(op) || op == Op::PowInt) throw std::invalid_argument("unary: bad op");
  check_operand(operand);
  Node n;
  n.op = op;
  n.lhs = operand;
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId ExprGraph::binary(Op op, NodeId lhs, NodeId rhs) {
  if (!is_binary(op)) throw std::invalid_argument("binary: bad op");
  check_operand(lhs);
  check_operand(rhs);
  Node n;
  n.op = op;
  n.lhs = lhs;
  n.rhs = rhs;
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId ExprGraph::pow_int(NodeId base, int exponent) {
  check_operand(base);
  Node n;
  n.op = Op::PowInt;
  n.lhs = base;
  n.exponent = exponent;
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId ExprGraph::append(const Node& node) {
  switch (node.op) {
    case Op::Const: return constant(node.value);
    case Op::Input: throw std::invalid_argument("append: use symbol() for inputs");
    case Op::PowInt: return pow_int(node.lhs, node.exponent);
    default: break;
  }
  return is_binary(node.op) ? binary(node.op, node.lhs, node.rhs) : unary(node.op, node.lhs);
}

NodeId ExprGraph::find_symbol(std::string_view name) const {
  auto it = symbol_index_.find(std::string(name));
  return it == symbol_index_.end() ? kNoNode : it->second;
}

std::size_t ExprGraph::input_ordinal(NodeId id) const {
  if (!is_input(id)) throw std::invalid_argument("node is not an input symbol");
  return static_cast<std::size_t>(nodes_[id].exponent);
}

// ---------------------------------------------------------------------------
// Sym

namespace {

void same_graph(const Sym& a, const Sym& b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
}

}  // namespace

Sym operator+(const Sym& a, const Sym& b) {
  same_graph(a, b);
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return {a.graph(), a.graph().binary(Op::Add, a.id(), b.id())};
}

Sym operator-(const Sym& a, const Sym& b) {
  same_graph(a, b);
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return {a.graph(), a.graph().binary(Op::Sub, a.id(), b.id())};
}

Sym operator*(const Sym& a, const Sym& b) {
  same_graph(a, b);
  if (a.is_zero() || b.is_zero()) return a.constant(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  if (a.graph().is_constant(a.id(), -1.0)) return -b;
  if (b.graph().is_constant(b.id(), -1.0)) return -a;
  return {a.graph(), a.graph().binary(Op::Mul, a.id(), b.id())};
}

Sym operator/(const Sym& a, const Sym& b) {
  same_graph(a, b);
  if (b.is_one()) return a;
  if (a.is_zero()) return a.constant(0.0);
  return {a.graph(), a.graph().binary(Op::Div, a.id(), b.id())};
}

Sym operator-(const Sym& a) {
  const Node& n = a.graph().node(a.id());
  if (n.op == Op::Const) return a.constant(-n.value);
  if (n.op == Op::Neg) return {a.graph(), n.lhs};
  return {a.graph(), a.graph().unary(Op::Neg, a.id())};
}

Sym sin(const Sym& x) { return {x.graph(), x.graph().unary(Op::Sin, x.id())}; }
Sym cos(const Sym& x) { return {x.graph(), x.graph().unary(Op::Cos, x.id())}; }
Sym exp(const Sym& x) { return {x.graph(), x.graph().unary(Op::Exp, x.id())}; }
Sym log(const Sym& x) { return {x.graph(), x.graph().unary(Op::Log, x.id())}; }
Sym sqrt(const Sym& x) { return {x.graph(), x.graph().unary(Op::Sqrt, x.id())}; }

Sym powi(const Sym& x, int exponent) {
  if (exponent == 0) return x.constant(1.0);
  if (exponent == 1) return x;
  return {x.graph(), x.graph().pow_int(x.id(), exponent)};
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

inline double eval_node(const Node& n, const double* values, std::span<const double> inputs) {
  switch (n.op) {
    case Op::Const:
      return n.value;
    case Op::Input:
      return inputs[static_cast<std::size_t>(n.exponent)];
    default:
      break;
  }
  const double a = values[n.lhs];
  const double b = is_binary(n.op) ? values[n.rhs] : 0.0;
  return apply_op(n.op, a, b, n.exponent);
}

void check_inputs(const ExprGraph& graph, std::span<const double> inputs) {
  if (inputs.size() != graph.num_symbols()) {
    throw std::invalid_argument("expected " + std::to_string(graph.num_symbols()) +
                                " input values, got " + std::to_string(inputs.size()));
  }
}

}  // namespace

std::vector<double> evaluate(const ExprGraph& graph, std::span<const NodeId> outputs,
                             std::span<const double> inputs) {
  check_inputs(graph, inputs);
  const auto& nodes = graph.nodes();
  std::vector<double> values(nodes.size(), 0.0);
  std::vector<std::uint8_t> done(nodes.size(), 0);
  std::vector<std::pair<NodeId, bool>> stack;
  std::vector<double> result;
  result.reserve(outputs.size());
  for (NodeId root : outputs) {
    if (root >= nodes.size()) throw std::out_of_range("output node does not exist");
    stack.emplace_back(root, false);
    while (!stack.empty()) {
      auto [id, expanded] = stack.back();
      stack.pop_back();
      if (done[id]) continue;
      const Node& n = nodes[id];
      if (!expanded) {
        stack.emplace_back(id, true);
        if (is_binary(n.op) && !done[n.rhs]) stack.emplace_back(n.rhs, false);
        if ((is_binary(n.op) || is_unary(n.op)) && !done[n.lhs]) stack.emplace_back(n.lhs, false);
        continue;
      }
      values[id] = eval_node(n, values.data(), inputs);
      done[id] = 1;
    }
    result.push_back(values[root]);
  }
  return result;
}

std::vector<double> bind_inputs(const ExprGraph& graph,
                                const std::unordered_map<std::string, double>& values) {
  std::vector<double> inputs;
  inputs.reserve(graph.num_symbols());
  for (const auto& name : graph.symbol_names()) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("unbound symbol '" + name + "'");
    inputs.push_back(it->second);
  }
  return inputs;
}

NaiveEvaluator::NaiveEvaluator(const ExprGraph& graph, std::vector<NodeId> outputs)
    : graph_(&graph),
      outputs_(std::move(outputs)),
      memo_(graph.size(), 0.0),
      stamp_(graph.size(), 0) {}

double NaiveEvaluator::visit(NodeId root, std::span<const double> inputs) {
  const auto& nodes = graph_->nodes();
  stack_.clear();
  stack_.emplace_back(root, false);
  while (!stack_.empty()) {
    auto [id, expanded] = stack_.back();
    stack_.pop_back();
    if (stamp_[id] == generation_) continue;
    const Node& n = nodes[id];
    if (!expanded) {
      stack_.emplace_back(id, true);
      if (is_binary(n.op) && stamp_[n.rhs] != generation_) stack_.emplace_back(n.rhs, false);
      if ((is_binary(n.op) || is_unary(n.op)) && stamp_[n.lhs] != generation_) {
        stack_.emplace_back(n.lhs, false);
      }
      continue;
    }
    memo_[id] = eval_node(n, memo_.data(), inputs);
    stamp_[id] = generation_;
  }
  return memo_[root];
}

void NaiveEvaluator::evaluate(std::span<const double> inputs, std::span<double> outputs) {
  check_inputs(*graph_, inputs);
  if (outputs.size() != outputs_.size()) throw std::invalid_argument("output span size mismatch");
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    if (++generation_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0u);
      generation_ = 1;
    }
    outputs[i] = visit(outputs_[i], inputs);
  }
}

std::vector<NodeId> reachable_nodes(const ExprGraph& graph, std::span<const NodeId> roots) {
  const auto& nodes = graph.nodes();
  std::vector<std::uint8_t> live(nodes.size(), 0);
  for (NodeId r : roots) live.at(r) = 1;
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!live[i]) continue;
    const Node& n = nodes[i];
    if (is_binary(n.op) || is_unary(n.op)) live[n.lhs] = 1;
    if (is_binary(n.op)) live[n.rhs] = 1;
  }
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (live[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

std::uint64_t expanded_tree_size(const ExprGraph& graph, std::span<const NodeId> roots) {
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  const auto live = reachable_nodes(graph, roots);
  std::vector<std::uint64_t> size(graph.size(), 0);
  for (NodeId id : live) {
    const Node& n = graph.node(id);
    std::uint64_t s = 1;
    if (is_binary(n.op) || is_unary(n.op)) s += size[n.lhs];
    if (is_binary(n.op)) s += size[n.rhs];
    size[id] = std::min(s, kCap);
  }
  std::uint64_t total = 0;
  for (NodeId r : roots) total = std::min(total + size[r], kCap);
  return total;
}

}  // namespace morphwing::expr
