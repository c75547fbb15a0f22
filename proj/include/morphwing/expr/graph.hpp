#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace morphwing::expr {

enum class Op : std::uint8_t {
  Const,
  Input,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Sin,
  Cos,
  Exp,
  Log,
  PowInt,
  Sqrt,
};

std::string_view op_name(Op op);

inline bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div;
}

inline bool is_unary(Op op) {
  return op == Op::Neg || op == Op::Sin || op == Op::Cos || op == Op::Exp ||
         op == Op::Log || op == Op::PowInt || op == Op::Sqrt;
}

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct Node {
  Op op = Op::Const;
  NodeId lhs = kNoNode;
  NodeId rhs = kNoNode;
  double value = 0.0;  // Const only
  int exponent = 0;    // PowInt exponent; symbol ordinal for Input
};

/// Raised when an evaluation leaves the domain of a guarded node
/// (|denominator| < 1e-300, log of a non-positive value, sqrt of a negative).
class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& what, Op op, double argument)
      : std::runtime_error(what), op_(op), argument_(argument) {}
  Op op() const { return op_; }
  double argument() const { return argument_; }

 private:
  Op op_;
  double argument_;
};

inline constexpr double kMinDenominator = 1e-300;

[[noreturn]] void throw_domain_error(Op op, double argument);

/// Single numeric kernel shared by every evaluator so that recursive
/// evaluation, constant folding and tape execution agree bitwise.
inline double apply_op(Op op, double a, double b, int exponent) {
  switch (op) {
    case Op::Add:
      return a + b;
    case Op::Sub:
      return a - b;
    case Op::Mul:
      return a * b;
    case Op::Div:
      if (!(std::abs(b) >= kMinDenominator)) throw_domain_error(op, b);
      return a / b;
    case Op::Neg:
      return -a;
    case Op::Sin:
      return std::sin(a);
    case Op::Cos:
      return std::cos(a);
    case Op::Exp:
      return std::exp(a);
    case Op::Log:
      if (!(a > 0.0)) throw_domain_error(op, a);
      return std::log(a);
    case Op::PowInt: {
      // Repeated squaring in a fixed order; negative exponents invert at the end.
      unsigned e = static_cast<unsigned>(exponent < 0 ? -exponent : exponent);
      double base = a;
      double acc = 1.0;
      while (e != 0) {
        if (e & 1u) acc *= base;
        e >>= 1u;
        if (e != 0) base *= base;
      }
      if (exponent < 0) {
        if (!(std::abs(acc) >= kMinDenominator)) throw_domain_error(Op::Div, acc);
        acc = 1.0 / acc;
      }
      return acc;
    }
    case Op::Sqrt:
      if (a < 0.0) throw_domain_error(op, a);
      return std::sqrt(a);
    case Op::Const:
    case Op::Input:
      break;
  }
  throw std::logic_error("apply_op: not an arithmetic op");
}

/// Append-only expression DAG. Operands always precede their users, so node
/// index order is a topological order.
class ExprGraph {
 public:
  NodeId symbol(std::string name);
  NodeId constant(double value);
  NodeId unary(Op op, NodeId operand);
  NodeId binary(Op op, NodeId lhs, NodeId rhs);
  NodeId pow_int(NodeId base, int exponent);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Symbols in declaration order; evaluation inputs are ordered the same way.
  const std::vector<std::string>& symbol_names() const { return symbol_names_; }
  const std::vector<NodeId>& symbol_nodes() const { return symbol_nodes_; }
  std::size_t num_symbols() const { return symbol_nodes_.size(); }
  NodeId find_symbol(std::string_view name) const;
  bool is_input(NodeId id) const { return id < nodes_.size() && nodes_[id].op == Op::Input; }
  /// Ordinal of an input node among the symbols.
  std::size_t input_ordinal(NodeId id) const;

  bool is_constant(NodeId id, double value) const {
    const Node& n = nodes_[id];
    return n.op == Op::Const && n.value == value;
  }

  /// Appends a node verbatim (operands must already exist).
  NodeId append(const Node& node);

 private:
  void check_operand(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<std::string> symbol_names_;
  std::vector<NodeId> symbol_nodes_;
  std::unordered_map<std::string, NodeId> symbol_index_;
};

/// Thin value handle over a graph node with arithmetic operators. Building
/// through Sym applies the identities x+0, x*1, x*0, x/1 at construction time
/// so that the derived graphs do not carry literal-zero arithmetic.
class Sym {
 public:
  Sym() = default;
  Sym(ExprGraph& graph, NodeId id) : graph_(&graph), id_(id) {}

  NodeId id() const { return id_; }
  ExprGraph& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }
  bool is_zero() const { return graph_->is_constant(id_, 0.0); }
  bool is_one() const { return graph_->is_constant(id_, 1.0); }

  Sym constant(double v) const { return {*graph_, graph_->constant(v)}; }

  friend Sym operator+(const Sym& a, const Sym& b);
  friend Sym operator-(const Sym& a, const Sym& b);
  friend Sym operator*(const Sym& a, const Sym& b);
  friend Sym operator/(const Sym& a, const Sym& b);
  friend Sym operator-(const Sym& a);

  friend Sym operator+(const Sym& a, double b) { return a + a.constant(b); }
  friend Sym operator+(double a, const Sym& b) { return b.constant(a) + b; }
  friend Sym operator-(const Sym& a, double b) { return a - a.constant(b); }
  friend Sym operator-(double a, const Sym& b) { return b.constant(a) - b; }
  friend Sym operator*(const Sym& a, double b) { return a * a.constant(b); }
  friend Sym operator*(double a, const Sym& b) { return b.constant(a) * b; }
  friend Sym operator/(const Sym& a, double b) { return a / a.constant(b); }
  friend Sym operator/(double a, const Sym& b) { return b.constant(a) / b; }

  Sym& operator+=(const Sym& o) { return *this = *this + o; }
  Sym& operator-=(const Sym& o) { return *this = *this - o; }
  Sym& operator*=(const Sym& o) { return *this = *this * o; }

 private:
  ExprGraph* graph_ = nullptr;
  NodeId id_ = kNoNode;
};

Sym sin(const Sym& x);
Sym cos(const Sym& x);
Sym exp(const Sym& x);
Sym log(const Sym& x);
Sym sqrt(const Sym& x);
Sym powi(const Sym& x, int exponent);

/// Memoized evaluation of `outputs` by depth-first traversal of the graph.
/// `inputs` is indexed by symbol ordinal.
std::vector<double> evaluate(const ExprGraph& graph, std::span<const NodeId> outputs,
                             std::span<const double> inputs);

/// Builds a symbol-ordered input vector from named bindings; every symbol
/// must be bound.
std::vector<double> bind_inputs(const ExprGraph& graph,
                                const std::unordered_map<std::string, double>& values);

/// Evaluates each output as an independent expression (sharing is only
/// exploited within one output). This is the baseline a per-entry symbolic
/// code generator would produce.
class NaiveEvaluator {
 public:
  NaiveEvaluator(const ExprGraph& graph, std::vector<NodeId> outputs);
  void evaluate(std::span<const double> inputs, std::span<double> outputs);
  std::size_t num_outputs() const { return outputs_.size(); }

 private:
  double visit(NodeId root, std::span<const double> inputs);

  const ExprGraph* graph_;
  std::vector<NodeId> outputs_;
  std::vector<double> memo_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::pair<NodeId, bool>> stack_;
  std::uint32_t generation_ = 0;
};

/// Nodes reachable from `roots`, in ascending (topological) order.
std::vector<NodeId> reachable_nodes(const ExprGraph& graph, std::span<const NodeId> roots);

/// Number of nodes the outputs would have if every shared subexpression were
/// duplicated (tree expansion). Saturates at 2^62.
std::uint64_t expanded_tree_size(const ExprGraph& graph, std::span<const NodeId> roots);

/// Reverse-mode derivatives of `output` with respect to each input node in
/// `wrt`. New nodes reference the existing graph. Inputs that `output` does
/// not depend on yield a literal zero node.
std::vector<NodeId> differentiate(ExprGraph& graph, NodeId output, std::span<const NodeId> wrt);

struct CseResult {
  ExprGraph graph;
  /// remap[old id] is the node in `graph`, or kNoNode when the node was dropped.
  std::vector<NodeId> remap;

  NodeId map(NodeId old) const { return remap.at(old); }
  std::vector<NodeId> map(std::span<const NodeId> old) const;
};

/// Structural deduplication plus constant folding. No re-association or
/// distribution is performed, so values are preserved bitwise. When `roots`
/// is non-empty only nodes reachable from them (and all symbols) are kept.
CseResult cse(const ExprGraph& graph, std::span<const NodeId> roots = {});

}  // namespace morphwing::expr
