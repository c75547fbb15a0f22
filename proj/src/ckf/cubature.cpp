#include "morphwing/ckf/cubature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace morphwing::ckf {

CubatureRule cubature_points(std::size_t n) {
  CubatureRule r;
  r.n = n;
  const auto N = static_cast<Eigen::Index>(n);
  const double radius = std::sqrt(static_cast<double>(n));
  r.points = Eigen::MatrixXd::Zero(N, 2 * N);
  for (Eigen::Index j = 0; j < N; ++j) {
    r.points(j, j) = radius;
    r.points(j, N + j) = -radius;
  }
  r.weight = n ? 1.0 / static_cast<double>(2 * n) : 0.0;
  return r;
}

// Against the weight e^{-x^T x} the third-degree rule sits at radius sqrt(n/2).
// Substituting w = sqrt(2 Sigma) x + mu doubles the squared radius, so in terms
// of a factor S of Sigma the points are S sqrt(n) (+-e_j) + mu and the 1/sqrt(pi)^n
// normalisation leaves weights 1/(2n).
Eigen::VectorXd gaussian_expectation(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& mu, const Eigen::MatrixXd& S, const CubatureRule& rule) {
  if (mu.size() != static_cast<Eigen::Index>(rule.n) || S.rows() != mu.size() || S.cols() != mu.size())
    throw std::invalid_argument("gaussian_expectation: dimension mismatch");
  Eigen::VectorXd acc;
  for (Eigen::Index i = 0; i < rule.points.cols(); ++i) {
    const Eigen::VectorXd y = f(S * rule.points.col(i) + mu);
    if (!y.allFinite()) throw std::domain_error("non-finite integrand at cubature point " + std::to_string(i));
    if (i == 0)
      acc = rule.weight * y;
    else
      acc += rule.weight * y;
  }
  return acc;
}

Eigen::MatrixXd tria(const Eigen::MatrixXd& A) {
  const auto n = A.rows();
  if (A.cols() < n) throw std::invalid_argument("tria needs at least as many columns as rows");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  Eigen::MatrixXd L = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>().transpose();
  for (Eigen::Index j = 0; j < n; ++j)
    if (L(j, j) < 0.0) L.col(j) = -L.col(j);
  return L;
}

namespace {

bool is_zero(const Eigen::MatrixXd& M) { return M.size() == 0 || (M.array() == 0.0).all(); }

Eigen::MatrixXd symmetric(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

// Factor of a covariance held in full form; eigenvalues are floored at 1e-12
// if Cholesky fails.
Eigen::MatrixXd refactor(const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd Ps = symmetric(P);
  Eigen::LLT<Eigen::MatrixXd> llt(Ps);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ps);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(1e-12);
  const Eigen::MatrixXd Pf = symmetric(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
  Eigen::LLT<Eigen::MatrixXd> again(Pf);
  if (again.info() != Eigen::Success) throw std::runtime_error("covariance cannot be refactored");
  return again.matrixL();
}

Eigen::MatrixXd sqrt_factor(const Eigen::MatrixXd& M) {
  if (M.isDiagonal(0.0)) return M.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(symmetric(M));
  if (llt.info() != Eigen::Success) throw std::invalid_argument("noise covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace

CkfState predict(const CkfState& s) {
  if (is_zero(s.Q)) return s;
  CkfState out = s;
  const auto n = s.S.rows();
  Eigen::MatrixXd A(n, 2 * n);
  A << s.S, sqrt_factor(s.Q);
  out.S = tria(A);
  return out;
}

CkfState predict_literal(const CkfState& s, const CubatureRule& rule) {
  const auto n = s.S.rows();
  const auto m = static_cast<Eigen::Index>(rule.size());
  Eigen::MatrixXd W(n, m);
  for (Eigen::Index i = 0; i < m; ++i) W.col(i) = s.S * rule.points.col(i) + s.w;  // propagated unchanged
  const Eigen::VectorXd mean = W.rowwise().sum() * rule.weight;
  Eigen::MatrixXd P = (W * W.transpose()) * rule.weight - mean * mean.transpose();
  if (s.Q.size()) P += s.Q;
  CkfState out = s;
  out.w = mean;
  out.S = refactor(P);
  return out;
}

std::pair<CkfState, PosteriorReport> update(const CkfState& s, const Eigen::VectorXd& a, const MeasurementFn& h,
                                            const CubatureRule& rule, const UpdateOptions& opt) {
  const auto n = s.S.rows();
  const auto p = a.size();
  const auto m = static_cast<Eigen::Index>(rule.size());
  if (s.w.size() != n || static_cast<Eigen::Index>(rule.n) != n || s.R.rows() != p)
    throw std::invalid_argument("ckf update: dimension mismatch");
  const std::size_t step = s.k + 1;

  // Deviations S xi_i are kept apart from the mean so that the centred sums
  // below do not pick up the rounding of (S xi_i + w) - w.
  Eigen::MatrixXd dW = s.S * rule.points;
  Eigen::MatrixXd Y(p, m);
  Eigen::VectorXd wi(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    wi = dW.col(i) + s.w;
    h(wi, Y.col(i));
    if (!Y.col(i).allFinite())
      throw FilterDivergence("measurement model is not finite at sigma point " + std::to_string(i), step);
  }

  PosteriorReport rep;
  rep.prediction = Y.rowwise().sum() * rule.weight;
  const double sw = std::sqrt(rule.weight);
  const Eigen::MatrixXd Yc = (Y.colwise() - rep.prediction) * sw;
  const Eigen::MatrixXd Wc = dW * sw;

  rep.innovation_cov = symmetric(Yc * Yc.transpose() + s.R);
  const Eigen::MatrixXd Pxy = Wc * Yc.transpose();

  Eigen::LLT<Eigen::MatrixXd> llt(rep.innovation_cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(rep.innovation_cov + 1e-12 * Eigen::MatrixXd::Identity(p, p));
    if (llt.info() != Eigen::Success)
      throw FilterDivergence("innovation covariance is not positive definite", step);
  }
  rep.gain = llt.solve(Pxy.transpose()).transpose();
  rep.innovation = opt.innovation_sign * (a - rep.prediction);

  CkfState out = s;
  out.w = s.w + rep.gain * rep.innovation;
  if (!out.w.allFinite()) throw FilterDivergence("weight estimate is not finite", step);

  if (opt.form == CovarianceForm::SquareRoot) {
    // (Wc - K Yc)(..)^T + K R K^T = P - K P' K^T
    Eigen::MatrixXd A(n, m + p);
    A << Wc - rep.gain * Yc, rep.gain * sqrt_factor(s.R);
    out.S = tria(A);
  } else {
    const Eigen::MatrixXd P = s.S * s.S.transpose() - rep.gain * rep.innovation_cov * rep.gain.transpose();
    out.S = refactor(P);
  }
  rep.cov_diag_max = out.S.rowwise().squaredNorm().maxCoeff();
  return {std::move(out), std::move(rep)};
}

std::pair<CkfState, PosteriorReport> update(const CkfState& s, const Eigen::VectorXd& x, const Eigen::VectorXd& a,
                                            const nn::MlpSpec& spec, const CubatureRule& rule,
                                            const UpdateOptions& opt) {
  nn::ForwardScratch scratch;
  return update(
      s, a, [&](const Eigen::VectorXd& w, Eigen::Ref<Eigen::VectorXd> y) { nn::forward(spec, w, x, y, scratch); },
      rule, opt);
}

CkfState initial_state(std::size_t n_w, std::size_t n_out, const FilterConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(n_w);
  const auto p = static_cast<Eigen::Index>(n_out);
  CkfState s;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  s.w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.w[i] = normal(rng);
  s.S = std::sqrt(cfg.p0) * Eigen::MatrixXd::Identity(n, n);
  s.Q = cfg.q * Eigen::MatrixXd::Identity(n, n);
  s.R = cfg.r * Eigen::MatrixXd::Identity(p, p);
  return s;
}

Trainer make_trainer(const nn::MlpSpec& spec, const FilterConfig& cfg, const std::vector<TrainSample>& samples) {
  nn::validate(spec);
  Trainer tr;
  tr.spec = spec;
  tr.config = cfg;
  const auto ni = static_cast<Eigen::Index>(spec.n_inputs());
  const auto no = static_cast<Eigen::Index>(spec.n_outputs());
  const std::size_t warm = std::min(cfg.warmup, samples.size());
  Eigen::MatrixXd X(ni, static_cast<Eigen::Index>(warm)), A(no, static_cast<Eigen::Index>(warm));
  for (std::size_t i = 0; i < warm; ++i) {
    if (samples[i].x.size() != ni || samples[i].a.size() != no)
      throw std::invalid_argument("training sample does not match the network dimensions");
    X.col(static_cast<Eigen::Index>(i)) = samples[i].x;
    A.col(static_cast<Eigen::Index>(i)) = samples[i].a;
  }
  tr.input = cfg.standardize_inputs && warm ? nn::Standardizer::fit(X) : nn::Standardizer::identity(spec.n_inputs());
  tr.output =
      cfg.standardize_outputs && warm ? nn::Standardizer::fit(A) : nn::Standardizer::identity(spec.n_outputs());
  tr.state = initial_state(spec.n_weights(), spec.n_outputs(), cfg);
  tr.rule = cubature_points(spec.n_weights());
  return tr;
}

Eigen::VectorXd predict_force(const Trainer& tr, const Eigen::VectorXd& x) {
  return tr.output.invert(nn::forward(tr.spec, tr.state.w, tr.input.apply(x)));
}

double normalized_mse(const Trainer& tr, const std::vector<TrainSample>& samples, std::size_t count) {
  count = std::min(count, samples.size());
  double err = 0.0, power = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    err += (predict_force(tr, samples[i].x) - samples[i].a).squaredNorm();
    power += samples[i].a.squaredNorm();
  }
  return power > 0.0 ? err / power : err;
}

void train_online(Trainer& tr, const std::vector<TrainSample>& samples, const std::vector<double>& times,
                  std::size_t stop) {
  const std::size_t N = samples.size();
  if (N == 0) return;
  const std::size_t total = N * std::max<std::size_t>(tr.config.epochs, 1);
  const std::size_t end = stop ? std::min(stop, total) : total;
  const UpdateOptions opt{tr.config.form, 1.0};
  for (std::size_t k = tr.state.k; k < end; ++k) {
    const std::size_t i = k % N;
    const Eigen::VectorXd x = tr.input.apply(samples[i].x);
    const Eigen::VectorXd a = tr.output.apply(samples[i].a);
    auto [next, rep] = update(predict(tr.state), x, a, tr.spec, tr.rule, opt);
    next.k = k + 1;
    tr.state = std::move(next);

    StepLog row;
    row.step = k + 1;
    row.t = i < times.size() ? times[i] : static_cast<double>(i);
    const double power = samples[i].a.squaredNorm();
    const double err = (tr.output.invert(rep.prediction) - samples[i].a).squaredNorm();
    row.prior_nmse = power > 0.0 ? err / power : err;
    row.fit_nmse = normalized_mse(tr, samples, std::min(k + 1, N));
    row.cov_diag_max = rep.cov_diag_max;
    row.cov_trace = tr.state.S.squaredNorm();
    tr.log.push_back(row);
  }
}

namespace {

constexpr char kMagic[8] = {'M', 'W', 'C', 'K', 'F', '0', '0', '1'};

void put_matrix(std::ofstream& out, const Eigen::MatrixXd& M) {
  out.write(reinterpret_cast<const char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size()));
}

void get_matrix(std::ifstream& in, Eigen::MatrixXd& M, Eigen::Index rows, Eigen::Index cols) {
  M.resize(rows, cols);
  in.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size()));
}

}  // namespace

void write_filter_state(const std::filesystem::path& path, const CkfState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t head[3] = {static_cast<std::uint64_t>(s.w.size()), static_cast<std::uint64_t>(s.R.rows()),
                                 static_cast<std::uint64_t>(s.k)};
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(head), sizeof head);
  put_matrix(out, s.w);
  put_matrix(out, s.S);
  put_matrix(out, s.Q);
  put_matrix(out, s.R);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

CkfState read_filter_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  std::uint64_t head[3];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a filter state file");
  const auto n = static_cast<Eigen::Index>(head[0]), p = static_cast<Eigen::Index>(head[1]);
  CkfState s;
  Eigen::MatrixXd w;
  get_matrix(in, w, n, 1);
  s.w = w.col(0);
  get_matrix(in, s.S, n, n);
  get_matrix(in, s.Q, n, n);
  get_matrix(in, s.R, p, p);
  s.k = static_cast<std::size_t>(head[2]);
  if (!in) throw std::runtime_error(path.string() + " is truncated");
  return s;
}

}  // namespace morphwing::ckf
