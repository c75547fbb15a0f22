#include <iostream>

#include "CLI11.hpp"
#include "morphwing/cli/commands.hpp"

using namespace morphwing::cli;

namespace {

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--model", o.model, "model file (.mdl)");
  cmd->add_option("--config", o.config, "experiment config (JSON); flags override its values");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "RNG seed for initial rates and weights");
  cmd->add_option("--duration", o.duration, "simulated time [s]");
  cmd->add_option("--dt", o.dt, "integration step [s]");
  cmd->add_option("--stride", o.stride, "steps between training samples");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"morphwing: flapping-wing dynamics, aero ground truth and online CKF training"};
  app.require_subcommand(1);
  Overrides o;

  auto* simulate = app.add_subcommand("simulate", "run a closed-loop flight and write trajectory/sample CSVs");
  add_common(simulate, o);
  auto* train = app.add_subcommand("train", "train the force surrogate online with the cubature Kalman filter");
  add_common(train, o);
  train->add_option("--resume", o.resume, "weight checkpoint to continue from");
  train->add_option("--samples", o.samples, "read samples from this CSV instead of simulating");
  train->add_option("--steps", o.steps, "stop after this many filter steps in total");
  auto* bench = app.add_subcommand("bench", "time naive vs compiled evaluation of D, C, G, dP/dq");
  add_common(bench, o);
  bench->add_option("--iterations", o.iterations, "timed evaluations per term and backend");
  auto* validate = app.add_subcommand("validate", "run the invariant suite on a model file");
  add_common(validate, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  if (simulate->parsed()) return cmd_simulate(o, std::cout, std::cerr);
  if (train->parsed()) return cmd_train(o, std::cout, std::cerr);
  if (bench->parsed()) return cmd_bench(o, std::cout, std::cerr);
  return cmd_validate(o, std::cout, std::cerr);
}
