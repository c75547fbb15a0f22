#include "morphwing/expr/tape.hpp"

#include <limits>
#include <sstream>

namespace morphwing::expr {

namespace {
constexpr std::size_t kForever = std::numeric_limits<std::size_t>::max();
}

CompiledTape compile(const ExprGraph& graph, std::span<const NodeId> outputs,
                     std::vector<std::string> output_names) {
  if (!output_names.empty() && output_names.size() != outputs.size()) {
    throw std::invalid_argument("compile: output name count does not match outputs");
  }
  for (NodeId id : outputs) {
    if (id >= graph.size()) throw std::out_of_range("compile: output node does not exist");
  }
  const auto live = reachable_nodes(graph, outputs);
  const auto& nodes = graph.nodes();

  // Position of each live node in the instruction order, and its last reader.
  std::vector<std::size_t> last_use(nodes.size(), 0);
  for (std::size_t pos = 0; pos < live.size(); ++pos) {
    const Node& n = nodes[live[pos]];
    if (is_unary(n.op) || is_binary(n.op)) last_use[n.lhs] = pos;
    if (is_binary(n.op)) last_use[n.rhs] = pos;
  }
  for (NodeId id : outputs) last_use[id] = kForever;

  CompiledTape tape;
  std::vector<std::uint32_t> slot_of(nodes.size(), 0);
  std::vector<std::uint32_t> free_slots;
  std::uint32_t n_slots = 0;
  auto allocate = [&]() {
    if (!free_slots.empty()) {
      const std::uint32_t s = free_slots.back();
      free_slots.pop_back();
      return s;
    }
    return n_slots++;
  };

  // Inputs are loaded before the first instruction, so their slots are
  // claimed up front and released after their last reader.
  for (NodeId id : live) {
    if (nodes[id].op != Op::Input) continue;
    const std::uint32_t s = allocate();
    slot_of[id] = s;
    const std::size_t ordinal = graph.input_ordinal(id);
    tape.inputs_.push_back({ordinal, s});
    tape.input_names_.push_back(graph.symbol_names()[ordinal]);
  }

  for (std::size_t pos = 0; pos < live.size(); ++pos) {
    const NodeId id = live[pos];
    const Node& n = nodes[id];
    if (n.op == Op::Input) continue;
    Instruction ins;
    ins.op = n.op;
    if (n.op == Op::Const) {
      ins.constant = n.value;
    } else {
      ins.a = slot_of[n.lhs];
      if (is_binary(n.op)) ins.b = slot_of[n.rhs];
      ins.exponent = n.exponent;
      // Release operands whose lifetime ends here; the destination may reuse
      // one of them because sources are read before the write.
      if (last_use[n.lhs] == pos) free_slots.push_back(slot_of[n.lhs]);
      if (is_binary(n.op) && n.rhs != n.lhs && last_use[n.rhs] == pos) {
        free_slots.push_back(slot_of[n.rhs]);
      }
    }
    ins.dst = allocate();
    slot_of[id] = ins.dst;
    tape.instructions_.push_back(ins);
  }

  for (std::size_t i = 0; i < outputs.size(); ++i) {
    tape.output_slots_.push_back(slot_of[outputs[i]]);
    tape.output_names_.push_back(output_names.empty() ? "out" + std::to_string(i)
                                                      : std::move(output_names[i]));
  }
  tape.n_slots_ = n_slots;
  return tape;
}

std::uint32_t CompiledTape::input_slot(std::string_view name) const {
  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    if (input_names_[i] == name) return inputs_[i].slot;
  }
  throw std::invalid_argument("tape has no input named '" + std::string(name) + "'");
}

void CompiledTape::evaluate(std::span<const double> inputs, std::span<double> workspace,
                            std::span<double> outputs) const {
  if (workspace.size() < n_slots_) throw std::invalid_argument("tape workspace too small");
  if (outputs.size() != output_slots_.size()) throw std::invalid_argument("tape output size mismatch");
  double* ws = workspace.data();
  for (const auto& in : inputs_) {
    if (in.ordinal >= inputs.size()) throw std::invalid_argument("tape input vector too short");
    ws[in.slot] = inputs[in.ordinal];
  }
  for (const Instruction& ins : instructions_) {
    switch (ins.op) {
      case Op::Const:
        ws[ins.dst] = ins.constant;
        break;
      case Op::Add:
        ws[ins.dst] = ws[ins.a] + ws[ins.b];
        break;
      case Op::Sub:
        ws[ins.dst] = ws[ins.a] - ws[ins.b];
        break;
      case Op::Mul:
        ws[ins.dst] = ws[ins.a] * ws[ins.b];
        break;
      case Op::Neg:
        ws[ins.dst] = -ws[ins.a];
        break;
      default:
        ws[ins.dst] = apply_op(ins.op, ws[ins.a], ws[ins.b], ins.exponent);
        break;
    }
  }
  for (std::size_t i = 0; i < output_slots_.size(); ++i) outputs[i] = ws[output_slots_[i]];
}

std::vector<double> CompiledTape::evaluate(std::span<const double> inputs) const {
  std::vector<double> workspace(n_slots_);
  std::vector<double> out(output_slots_.size());
  evaluate(inputs, workspace, out);
  return out;
}

std::string CompiledTape::dump() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    os << "slot" << inputs_[i].slot << " = input " << input_names_[i] << '\n';
  }
  for (const Instruction& ins : instructions_) {
    os << "slot" << ins.dst << " = " << op_name(ins.op);
    if (ins.op == Op::Const) {
      os << ' ' << ins.constant;
    } else {
      os << " slot" << ins.a;
      if (is_binary(ins.op)) os << " slot" << ins.b;
      if (ins.op == Op::PowInt) os << ' ' << ins.exponent;
    }
    os << '\n';
  }
  for (std::size_t i = 0; i < output_slots_.size(); ++i) {
    os << "output " << output_names_[i] << " = slot" << output_slots_[i] << '\n';
  }
  return os.str();
}

}  // namespace morphwing::expr
