#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "morphwing/ckf/cubature.hpp"
#include "morphwing/sim/simulate.hpp"

namespace morphwing::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDivergence = 3 };

/// Input/usage problem that maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Command-line values; anything set here overrides the config file.
struct Overrides {
  std::optional<std::filesystem::path> model, config, out, resume, samples;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration, dt;
  std::optional<std::size_t> stride, steps, iterations;
};

struct ExperimentConfig {
  std::filesystem::path model;
  std::filesystem::path out = "out";
  sim::SimConfig sim;
  ckf::FilterConfig filter;
  std::size_t bench_iterations = 1000;
};

/// Config file (JSON, format 1): {"model", "out", "seed", "sim", "filter",
/// "bench"}. Relative paths resolve against the config file's directory.
ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
/// Defaults, then the config file, then command-line flags.
ExperimentConfig resolve(const Overrides& o);

int cmd_simulate(const Overrides& o, std::ostream& log, std::ostream& err);
int cmd_train(const Overrides& o, std::ostream& log, std::ostream& err);
int cmd_bench(const Overrides& o, std::ostream& log, std::ostream& err);
int cmd_validate(const Overrides& o, std::ostream& log, std::ostream& err);

struct BenchRow {
  std::string term;     // D, C, G, Pjac
  std::string backend;  // naive, tape
  std::size_t iterations = 0;
  double median_us = 0.0;
  double p95_us = 0.0;
  double max_abs_diff = 0.0;  // against the other backend
};

struct BenchReport {
  std::vector<BenchRow> rows;
  /// naive median / tape median per term, in row order D, C, G, Pjac.
  std::vector<std::pair<std::string, double>> speedup;
};

BenchReport run_bench(const multibody::MultibodyModel& model, std::size_t iterations, std::uint64_t seed);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // worst measured quantity
  double bound = 0.0;
};

/// Invariant suite used by `validate`: D symmetric positive definite, the
/// skew-symmetry of Ddot - 2C (Ddot exact by forward mode), Jacobian against
/// finite differences, and energy balance of a short unforced run.
std::vector<CheckResult> run_model_checks(const multibody::DynamicsTerms& terms, std::size_t n_states,
                                          std::uint64_t seed);

}  // namespace morphwing::cli
