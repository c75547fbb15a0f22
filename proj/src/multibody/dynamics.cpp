#include <cmath>
#include <numbers>

#include "morphwing/multibody/dynamics.hpp"

namespace morphwing::multibody {

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

void wrap_euler(const MultibodyModel& model, Eigen::Ref<Eigen::VectorXd> q) {
  for (BaseDof d : {BaseDof::Roll, BaseDof::Pitch, BaseDof::Yaw})
    if (auto i = model.base_index(d)) q[static_cast<Eigen::Index>(*i)] = wrap_angle(q[static_cast<Eigen::Index>(*i)]);
}

void check_configuration(const DynamicsTerms& terms, const Eigen::VectorXd& q) {
  if (static_cast<std::size_t>(q.size()) != terms.n_q)
    throw std::invalid_argument("state has wrong dimension");
  if (!q.allFinite()) throw std::invalid_argument("state is not finite");
  if (!terms.model.has_euler_singularity()) return;
  const double pitch = wrap_angle(q[static_cast<Eigen::Index>(*terms.model.base_index(BaseDof::Pitch))]);
  if (std::abs(pitch) >= std::numbers::pi / 2 - kPitchLimitMargin)
    throw SingularityError("Euler singularity: |pitch| = " + std::to_string(std::abs(pitch)) +
                           " is within " + std::to_string(kPitchLimitMargin) + " of pi/2");
}

namespace {

void load_state(const DynamicsTerms& terms, const VehicleState& s, DynamicsWorkspace& ws) {
  check_configuration(terms, s.q);
  if (static_cast<std::size_t>(s.qdot.size()) != terms.n_q)
    throw std::invalid_argument("velocity has wrong dimension");
  const std::size_t n = terms.n_q;
  ws.x.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    ws.x[i] = s.q[static_cast<Eigen::Index>(i)];
    ws.x[n + i] = s.qdot[static_cast<Eigen::Index>(i)];
  }
}

void run(const expr::CompiledTape& tape, DynamicsWorkspace& ws) {
  ws.slots.resize(std::max(ws.slots.size(), tape.n_slots()));
  ws.out.resize(tape.n_outputs());
  try {
    tape.evaluate(ws.x, ws.slots, ws.out);
  } catch (const expr::EvalError& e) {
    throw SingularityError(std::string("dynamics evaluation failed: ") + e.what());
  }
}

// Row-major block starting at `offset` into a matrix.
void read_matrix(const std::vector<double>& src, std::size_t offset, Eigen::Index rows,
                 Eigen::Index cols, Eigen::MatrixXd& dst) {
  dst.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      dst(i, j) = src[offset + static_cast<std::size_t>(i * cols + j)];
}

void symmetrize(Eigen::MatrixXd& D) {
  const Eigen::MatrixXd Dt = D.transpose();
  D = 0.5 * (D + Dt);
}

}  // namespace

void eval_terms(const DynamicsTerms& terms, const VehicleState& state, DynamicsWorkspace& ws,
                TermValues& out) {
  load_state(terms, state, ws);
  const auto n = static_cast<Eigen::Index>(terms.n_q);
  run(terms.mass, ws);
  read_matrix(ws.out, 0, n, n, out.D);
  symmetrize(out.D);
  run(terms.coriolis, ws);
  read_matrix(ws.out, 0, n, n, out.C);
  run(terms.gravity, ws);
  out.G = Eigen::Map<const Eigen::VectorXd>(ws.out.data(), n);
  out.B1 = terms.B1;
}

TermValues eval_terms(const DynamicsTerms& terms, const VehicleState& state) {
  DynamicsWorkspace ws;
  TermValues out;
  eval_terms(terms, state, ws, out);
  return out;
}

namespace {

void read_wing(const std::vector<double>& src, std::size_t offset_points, std::size_t offset_axes,
               std::size_t p, WingKinematics& wing) {
  const auto pp = static_cast<Eigen::Index>(p);
  wing.points.resize(3, pp);
  wing.chord.resize(3, pp);
  wing.normal.resize(3, pp);
  for (std::size_t e = 0; e < p; ++e) {
    for (int r = 0; r < 3; ++r) {
      const auto col = static_cast<Eigen::Index>(e);
      wing.points(r, col) = src[offset_points + 3 * e + static_cast<std::size_t>(r)];
      wing.chord(r, col) = src[offset_axes + 6 * e + static_cast<std::size_t>(r)];
      wing.normal(r, col) = src[offset_axes + 6 * e + 3 + static_cast<std::size_t>(r)];
    }
  }
}

}  // namespace

void eval_all(const DynamicsTerms& terms, const VehicleState& state, DynamicsWorkspace& ws,
              TermValues& values, WingKinematics& wing) {
  load_state(terms, state, ws);
  run(terms.combined, ws);
  const std::size_t n = terms.n_q, p = terms.n_elements;
  const auto ni = static_cast<Eigen::Index>(n);
  std::size_t off = 0;
  read_matrix(ws.out, off, ni, ni, values.D);
  symmetrize(values.D);
  off += n * n;
  read_matrix(ws.out, off, ni, ni, values.C);
  off += n * n;
  values.G = Eigen::Map<const Eigen::VectorXd>(ws.out.data() + off, ni);
  off += n;
  values.B1 = terms.B1;
  read_matrix(ws.out, off, static_cast<Eigen::Index>(3 * p), ni, wing.jacobian);
  off += 3 * p * n;
  read_wing(ws.out, off, off + 3 * p, p, wing);
}

WingKinematics wing_kinematics(const DynamicsTerms& terms, const VehicleState& state) {
  DynamicsWorkspace ws;
  load_state(terms, state, ws);
  WingKinematics wing;
  const std::size_t n = terms.n_q, p = terms.n_elements;
  run(terms.points, ws);
  read_wing(ws.out, 0, 3 * p, p, wing);
  run(terms.jacobian, ws);
  read_matrix(ws.out, 0, static_cast<Eigen::Index>(3 * p), static_cast<Eigen::Index>(n), wing.jacobian);
  return wing;
}

std::vector<Eigen::Vector3d> quarter_chord_points(const DynamicsTerms& terms,
                                                  const VehicleState& state) {
  DynamicsWorkspace ws;
  load_state(terms, state, ws);
  run(terms.points, ws);
  std::vector<Eigen::Vector3d> pts(terms.n_elements);
  for (std::size_t e = 0; e < terms.n_elements; ++e)
    pts[e] = {ws.out[3 * e], ws.out[3 * e + 1], ws.out[3 * e + 2]};
  return pts;
}

std::pair<double, double> energy(const DynamicsTerms& terms, const VehicleState& state) {
  DynamicsWorkspace ws;
  load_state(terms, state, ws);
  run(terms.energy, ws);
  return {ws.out[0], ws.out[1]};
}

}  // namespace morphwing::multibody
