#pragma once

#include <span>
#include <string>
#include <vector>

#include "morphwing/expr/graph.hpp"

namespace morphwing::expr {

struct Instruction {
  Op op = Op::Const;
  std::uint32_t dst = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double constant = 0.0;
  int exponent = 0;
};

/// Flat, topologically ordered program compiled from an ExprGraph.
///
/// Evaluation only reads the tape, so one tape can be evaluated from several
/// threads as long as each caller brings its own workspace of n_slots()
/// doubles.
class CompiledTape {
 public:
  struct InputBinding {
    std::size_t ordinal;  // position in the graph's symbol list
    std::uint32_t slot;
  };

  std::size_t n_slots() const { return n_slots_; }
  std::size_t n_inputs() const { return input_names_.size(); }
  std::size_t n_outputs() const { return output_slots_.size(); }
  const std::vector<Instruction>& instructions() const { return instructions_; }
  const std::vector<InputBinding>& input_bindings() const { return inputs_; }
  const std::vector<std::string>& input_names() const { return input_names_; }
  const std::vector<std::string>& output_names() const { return output_names_; }
  std::uint32_t output_slot(std::size_t i) const { return output_slots_.at(i); }
  std::uint32_t input_slot(std::string_view name) const;

  /// `inputs` has one value per symbol of the source graph, `workspace` at
  /// least n_slots() entries. Throws EvalError on a domain violation.
  void evaluate(std::span<const double> inputs, std::span<double> workspace,
                std::span<double> outputs) const;

  /// Convenience overload that allocates its own workspace.
  std::vector<double> evaluate(std::span<const double> inputs) const;

  /// Line-oriented listing, e.g. `slot3 = mul slot1 slot2`.
  std::string dump() const;

 private:
  friend CompiledTape compile(const ExprGraph&, std::span<const NodeId>, std::vector<std::string>);

  std::vector<Instruction> instructions_;
  std::vector<InputBinding> inputs_;
  std::vector<std::string> input_names_;
  std::vector<std::uint32_t> output_slots_;
  std::vector<std::string> output_names_;
  std::size_t n_slots_ = 0;
};

/// Compiles the nodes reachable from `outputs` into a tape. Dead nodes are
/// dropped and slots are recycled by linear scan over node lifetimes.
CompiledTape compile(const ExprGraph& graph, std::span<const NodeId> outputs,
                     std::vector<std::string> output_names = {});

}  // namespace morphwing::expr
