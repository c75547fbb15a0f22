#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphwing/nn/mlp.hpp"

namespace morphwing::ckf {

class FilterDivergence : public std::runtime_error {
 public:
  FilterDivergence(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Third-degree spherical-radial rule: 2n points sqrt(n) (+-e_j), weight 1/(2n).
struct CubatureRule {
  std::size_t n = 0;
  Eigen::MatrixXd points;  // n x 2n; column j is +e_j, column n + j is -e_j
  double weight = 0.0;

  std::size_t size() const { return 2 * n; }
};

CubatureRule cubature_points(std::size_t n);

/// E[f(w)] for w ~ N(mu, S S^T): sum_i b_i f(S xi_i + mu).
Eigen::VectorXd gaussian_expectation(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& mu, const Eigen::MatrixXd& S, const CubatureRule& rule);

/// Lower-triangular L with positive diagonal and L L^T = A A^T (QR of A^T).
Eigen::MatrixXd tria(const Eigen::MatrixXd& A);

enum class CovarianceForm { SquareRoot, Full };

struct CkfState {
  Eigen::VectorXd w;  // weight mean
  Eigen::MatrixXd S;  // lower-triangular, P = S S^T
  Eigen::MatrixXd Q;  // process noise
  Eigen::MatrixXd R;  // measurement noise
  std::size_t k = 0;

  Eigen::MatrixXd P() const { return S * S.transpose(); }
};

struct PosteriorReport {
  Eigen::VectorXd prediction;      // a_hat before the update
  Eigen::VectorXd innovation;      // a - a_hat
  Eigen::MatrixXd innovation_cov;  // P'
  Eigen::MatrixXd gain;            // K
  double cov_diag_max = 0.0;       // max diag of the posterior P
};

/// P <- P + Q by re-triangularising [S | Q^(1/2)]. Q == 0 leaves S untouched.
CkfState predict(const CkfState& s);
/// Sigma points through the identity process model, moments rebuilt from
/// them, plus Q, then refactored. Reference path for predict().
CkfState predict_literal(const CkfState& s, const CubatureRule& rule);

/// Output of the measurement model for one weight vector.
using MeasurementFn = std::function<void(const Eigen::VectorXd& w, Eigen::Ref<Eigen::VectorXd> y)>;

struct UpdateOptions {
  CovarianceForm form = CovarianceForm::SquareRoot;
  /// +1 uses a - a_hat; -1 is the reversed sign, kept only for the sign test.
  double innovation_sign = 1.0;
};

std::pair<CkfState, PosteriorReport> update(const CkfState& s, const Eigen::VectorXd& a, const MeasurementFn& h,
                                            const CubatureRule& rule, const UpdateOptions& opt = {});

/// Network measurement model h(w) = phi(x, w).
std::pair<CkfState, PosteriorReport> update(const CkfState& s, const Eigen::VectorXd& x, const Eigen::VectorXd& a,
                                            const nn::MlpSpec& spec, const CubatureRule& rule,
                                            const UpdateOptions& opt = {});

struct FilterConfig {
  double q = 1e-8;        // Q = q I
  double r = 1e-6;        // R = r I
  double p0 = 0.1;        // P_0 = p0 I
  double init_std = 0.1;  // w_0 ~ N(0, init_std^2)
  std::uint64_t seed = 1;
  std::size_t width = 16;
  std::size_t warmup = 5;          // samples used to fit the standardizers
  bool standardize_inputs = true;
  bool standardize_outputs = true;
  std::size_t epochs = 1;
  CovarianceForm form = CovarianceForm::SquareRoot;
};

/// Fresh filter: seeded Gaussian weights, S = sqrt(p0) I.
CkfState initial_state(std::size_t n_w, std::size_t n_out, const FilterConfig& cfg);

struct TrainSample {
  Eigen::VectorXd x;
  Eigen::VectorXd a;
};

struct StepLog {
  std::size_t step = 0;
  double t = 0.0;
  double prior_nmse = 0.0;  // one-step-ahead error on the incoming sample
  double fit_nmse = 0.0;    // current weights over every sample seen so far
  double cov_diag_max = 0.0;
  double cov_trace = 0.0;
};

struct Trainer {
  nn::MlpSpec spec;
  FilterConfig config;
  nn::Standardizer input, output;
  CkfState state;
  CubatureRule rule;
  std::vector<StepLog> log;
};

/// Fits the standardizers on the first `warmup` samples and draws the
/// initial weights.
Trainer make_trainer(const nn::MlpSpec& spec, const FilterConfig& cfg, const std::vector<TrainSample>& samples);

/// Prediction in physical units.
Eigen::VectorXd predict_force(const Trainer& tr, const Eigen::VectorXd& x);

/// sum |a_hat - a|^2 / sum |a|^2 over the given samples.
double normalized_mse(const Trainer& tr, const std::vector<TrainSample>& samples, std::size_t count);

/// Processes samples[tr.state.k ...] up to `stop` (all when 0), one
/// predict/update each, cycling `epochs` times through the stream. Resuming
/// from a saved trainer continues the same sequence.
void train_online(Trainer& tr, const std::vector<TrainSample>& samples, const std::vector<double>& times = {},
                  std::size_t stop = 0);

/// Binary dump of a filter state (magic, n, p, k, then w, S, Q, R as raw
/// doubles) so a resumed run continues bit for bit.
void write_filter_state(const std::filesystem::path& path, const CkfState& s);
CkfState read_filter_state(const std::filesystem::path& path);

}  // namespace morphwing::ckf
