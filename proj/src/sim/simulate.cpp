#include "morphwing/sim/simulate.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace morphwing::sim {

using nlohmann::json;

namespace {

std::map<std::string, double> number_map(const json& j) {
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<double>();
  return out;
}

}  // namespace

SimConfig parse_sim_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  SimConfig c;
  try {
    if (doc.contains("format") && doc.at("format").get<int>() != 1)
      throw ConfigError("unsupported config format");
    const json& s = doc.contains("sim") ? doc.at("sim") : doc;
    c.dt = s.value("dt", c.dt);
    c.duration = s.value("duration", c.duration);
    c.sample_stride = s.value("sample_stride", c.sample_stride);
    c.seed = s.value("seed", c.seed);
    c.log_stride = s.value("log_stride", c.log_stride);
    if (s.contains("gains")) {
      c.gains.kp = s.at("gains").value("kp", 0.0);
      c.gains.kd = s.at("gains").value("kd", 0.0);
    }
    if (s.contains("joints")) {
      const auto& js = s.at("joints");
      for (auto it = js.begin(); it != js.end(); ++it) {
        JointReference r;
        r.amplitude = it.value().value("amplitude", 0.0);
        r.frequency = it.value().value("frequency", 0.0);
        r.phase = it.value().value("phase", 0.0);
        r.offset = it.value().value("offset", 0.0);
        c.joints[it.key()] = r;
      }
    }
    if (s.contains("initial")) {
      const auto& init = s.at("initial");
      if (init.contains("q")) c.initial_q = number_map(init.at("q"));
      if (init.contains("qdot")) c.initial_qdot = number_map(init.at("qdot"));
      c.initial_rate_noise = init.value("rate_noise", 0.0);
      c.start_on_reference = init.value("start_on_reference", true);
    }
    const std::string mode = s.value("accel_mode", "model");
    if (mode == "model") c.accel_mode = AccelMode::Model;
    else if (mode == "finite_difference") c.accel_mode = AccelMode::FiniteDifference;
    else throw ConfigError("accel_mode must be 'model' or 'finite_difference'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_config(ss.str());
}

void validate(const SimConfig& c, const multibody::MultibodyModel& model) {
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ConfigError("dt must be positive");
  if (!(c.duration >= 0.0)) throw ConfigError("duration must be non-negative");
  if (c.sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
  if (c.log_stride < 1) throw ConfigError("log_stride must be >= 1");
  const double limit = 0.5 / c.dt / 100.0;
  const auto names = model.dof_names();
  auto known = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  for (const auto& [name, r] : c.joints) {
    if (!known(name)) throw ConfigError("reference for unknown joint '" + name + "'");
    const auto it = std::find_if(model.joints.begin(), model.joints.end(),
                                 [&](const auto& j) { return j.name == name; });
    if (it == model.joints.end() || !it->actuated)
      throw ConfigError("reference given for non-actuated DOF '" + name + "'");
    if (!(std::abs(r.frequency) < limit))
      throw ConfigError("frequency of '" + name + "' must stay 100x below the Nyquist rate of dt");
  }
  for (const auto* m : {&c.initial_q, &c.initial_qdot})
    for (const auto& [name, v] : *m)
      if (!known(name)) throw ConfigError("initial value for unknown DOF '" + name + "'");
}

ReferenceTrajectory::ReferenceTrajectory(const multibody::MultibodyModel& model, const SimConfig& config) {
  for (std::size_t j : model.joint_order()) {
    if (!model.joints[j].actuated) continue;
    auto it = config.joints.find(model.joints[j].name);
    refs_.push_back(it == config.joints.end() ? JointReference{} : it->second);
  }
}

Reference ReferenceTrajectory::at(double t) const {
  Reference r{Eigen::VectorXd(static_cast<Eigen::Index>(refs_.size())),
              Eigen::VectorXd(static_cast<Eigen::Index>(refs_.size()))};
  for (std::size_t i = 0; i < refs_.size(); ++i) {
    const auto& j = refs_[i];
    const double w = 2.0 * std::numbers::pi * j.frequency;
    const double ph = w * t + j.phase;
    r.q[static_cast<Eigen::Index>(i)] = j.offset + j.amplitude * std::sin(ph);
    r.qdot[static_cast<Eigen::Index>(i)] = j.amplitude * w * std::cos(ph);
  }
  return r;
}

Eigen::VectorXd pd_tracking_torque(const Eigen::VectorXd& q_a, const Eigen::VectorXd& qdot_a,
                                   const Reference& ref, const PdGains& gains) {
  return gains.kp * (ref.q - q_a) + gains.kd * (ref.qdot - qdot_a);
}

ForwardResult forward_dynamics(const DynamicsTerms& terms, const VehicleState& state,
                               const Eigen::VectorXd& xi, const Eigen::VectorXd& u1, SimWorkspace& ws) {
  if (static_cast<std::size_t>(u1.size()) != terms.n_a)
    throw std::invalid_argument("u1 must have one entry per actuated DOF");
  multibody::eval_all(terms, state, ws.dyn, ws.terms, ws.wing);
  ForwardResult r;
  const auto aero = aero::element_forces(terms, ws.wing, state.qdot, xi);
  r.aero_force = aero.generalized;
  r.xidot = aero::lag_dynamics(terms, ws.wing, state.qdot, xi);
  r.damping_force = -terms.model.damping().cwiseProduct(state.qdot);
  r.u1 = u1;
  const auto& T = ws.terms;
  const Eigen::VectorXd rhs = T.B1 * u1 + r.aero_force - T.C * state.qdot - T.G + r.damping_force;
  Eigen::LLT<Eigen::MatrixXd> llt(T.D);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os.precision(17);
    os << "mass matrix is not positive definite at t=" << state.t << " q=[" << state.q.transpose()
       << "] qdot=[" << state.qdot.transpose() << "]";
    throw multibody::SingularityError(os.str());
  }
  r.qddot = llt.solve(rhs);
  return r;
}

ForwardResult forward_dynamics(const DynamicsTerms& terms, const VehicleState& state,
                               const Eigen::VectorXd& xi, const Eigen::VectorXd& u1) {
  SimWorkspace ws;
  return forward_dynamics(terms, state, xi, u1, ws);
}

namespace {

struct Derivative {
  Eigen::VectorXd dq, dqdot, dxi;
};

Derivative rhs(const DynamicsTerms& terms, double t, const SimState& s, const ControlLaw& law,
               SimWorkspace& ws) {
  const Eigen::VectorXd u1 = law(t, s.vehicle);
  auto f = forward_dynamics(terms, s.vehicle, s.xi, u1, ws);
  return {s.vehicle.qdot, std::move(f.qddot), std::move(f.xidot)};
}

SimState advance(const SimState& s, const Derivative& d, double h) {
  SimState out = s;
  out.vehicle.q += h * d.dq;
  out.vehicle.qdot += h * d.dqdot;
  out.xi += h * d.dxi;
  out.vehicle.t = s.vehicle.t + h;
  return out;
}

void check_finite(const SimState& s) {
  if (!s.vehicle.q.allFinite() || !s.vehicle.qdot.allFinite() || !s.xi.allFinite()) {
    std::ostringstream os;
    os << "integration diverged at t=" << s.vehicle.t;
    throw DivergenceError(os.str());
  }
}

}  // namespace

SimState step_rk4(const DynamicsTerms& terms, const SimState& s, const ControlLaw& law, double dt,
                  SimWorkspace& ws) {
  if (dt == 0.0) return s;
  const double t = s.vehicle.t;
  try {
    const auto k1 = rhs(terms, t, s, law, ws);
    const auto s2 = advance(s, k1, 0.5 * dt);
    check_finite(s2);
    const auto k2 = rhs(terms, t + 0.5 * dt, s2, law, ws);
    const auto s3 = advance(s, k2, 0.5 * dt);
    check_finite(s3);
    const auto k3 = rhs(terms, t + 0.5 * dt, s3, law, ws);
    const auto s4 = advance(s, k3, dt);
    check_finite(s4);
    const auto k4 = rhs(terms, t + dt, s4, law, ws);
    SimState out = s;
    out.vehicle.q += dt / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
    out.vehicle.qdot += dt / 6.0 * (k1.dqdot + 2.0 * k2.dqdot + 2.0 * k3.dqdot + k4.dqdot);
    out.xi += dt / 6.0 * (k1.dxi + 2.0 * k2.dxi + 2.0 * k3.dxi + k4.dxi);
    out.vehicle.t = t + dt;
    check_finite(out);
    multibody::wrap_euler(terms.model, out.vehicle.q);
    return out;
  } catch (const std::invalid_argument& e) {
    // Non-finite substep states are rejected by the tape front end.
    throw DivergenceError(std::string("integration diverged near t=") + std::to_string(t) + ": " + e.what());
  }
}

TrainingSample extract_training_sample(const DynamicsTerms& terms, const VehicleState& state,
                                       const Eigen::VectorXd& qddot, const Eigen::VectorXd& u1) {
  const auto T = multibody::eval_terms(terms, state);
  TrainingSample s;
  s.t = state.t;
  s.x.resize(2 * state.q.size());
  s.x << state.q, state.qdot;
  s.a = T.D * qddot + T.C * state.qdot + T.G - T.B1 * u1 +
        terms.model.damping().cwiseProduct(state.qdot);
  return s;
}

SimState initial_state(const DynamicsTerms& terms, const SimConfig& config) {
  const auto& model = terms.model;
  const auto n = static_cast<Eigen::Index>(terms.n_q);
  SimState s;
  s.vehicle.q = Eigen::VectorXd::Zero(n);
  s.vehicle.qdot = Eigen::VectorXd::Zero(n);
  s.xi = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(terms.n_elements));
  const auto names = model.dof_names();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nm = names[static_cast<std::size_t>(i)];
    if (auto it = config.initial_q.find(nm); it != config.initial_q.end()) s.vehicle.q[i] = it->second;
    if (auto it = config.initial_qdot.find(nm); it != config.initial_qdot.end()) s.vehicle.qdot[i] = it->second;
  }
  if (config.start_on_reference && terms.n_a > 0) {
    const auto ref = ReferenceTrajectory(model, config).at(0.0);
    const auto na = static_cast<Eigen::Index>(terms.n_a);
    s.vehicle.q.tail(na) = ref.q;
    s.vehicle.qdot.tail(na) = ref.qdot;
  }
  if (config.initial_rate_noise > 0.0) {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, config.initial_rate_noise);
    for (std::size_t i = 0; i < model.n_base(); ++i) s.vehicle.qdot[static_cast<Eigen::Index>(i)] += gauss(rng);
  }
  return s;
}

ExperimentResult run_experiment(const DynamicsTerms& terms, const SimConfig& config) {
  validate(config, terms.model);
  const ReferenceTrajectory ref(terms.model, config);
  const auto na = static_cast<Eigen::Index>(terms.n_a);
  const ControlLaw law = [&](double t, const VehicleState& s) {
    return pd_tracking_torque(s.q.tail(na), s.qdot.tail(na), ref.at(t), config.gains);
  };

  ExperimentResult result;
  SimWorkspace ws;
  SimState s = initial_state(terms, config);
  const auto n_steps = static_cast<std::size_t>(std::llround(config.duration / config.dt));
  double sq_err = 0.0;
  Eigen::VectorXd prev_qdot = s.vehicle.qdot;

  for (std::size_t k = 0;; ++k) {
    // Everything at step k is evaluated at the current state before stepping.
    const Eigen::VectorXd u1 = law(s.vehicle.t, s.vehicle);
    const auto f = forward_dynamics(terms, s.vehicle, s.xi, u1, ws);
    if (k > 0 && k % config.log_stride == 0)
      result.trajectory.push_back({s.vehicle.t, s.vehicle.q, s.vehicle.qdot, f.aero_force, u1});
    if (k > 0 && k % config.sample_stride == 0) {
      Eigen::VectorXd qddot = f.qddot;
      if (config.accel_mode == AccelMode::FiniteDifference) qddot = (s.vehicle.qdot - prev_qdot) / config.dt;
      result.samples.push_back(extract_training_sample(terms, s.vehicle, qddot, u1));
      result.applied_aero.push_back(f.aero_force);
    }
    if (k > 0 && na > 0) sq_err += (s.vehicle.q.tail(na) - ref.at(s.vehicle.t).q).squaredNorm();
    if (k == n_steps) break;
    prev_qdot = s.vehicle.qdot;
    s = step_rk4(terms, s, law, config.dt, ws);
    // Keep time on the grid rather than accumulating dt.
    s.vehicle.t = static_cast<double>(k + 1) * config.dt;
  }
  if (n_steps > 0 && na > 0)
    result.tracking_rms = std::sqrt(sq_err / static_cast<double>(n_steps * static_cast<std::size_t>(na)));
  return result;
}

namespace {

void push_names(std::vector<std::string>& h, const std::string& prefix, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
}

}  // namespace

std::vector<std::string> trajectory_header(const DynamicsTerms& terms) {
  std::vector<std::string> h{"t"};
  push_names(h, "q", terms.n_q);
  push_names(h, "qdot", terms.n_q);
  push_names(h, "aero", terms.n_q);
  push_names(h, "u", terms.n_a);
  return h;
}

std::vector<std::string> sample_header(const DynamicsTerms& terms) {
  std::vector<std::string> h{"t"};
  push_names(h, "x", 2 * terms.n_q);
  push_names(h, "a", terms.n_q);
  return h;
}

std::vector<std::vector<double>> trajectory_rows(const ExperimentResult& r) {
  std::vector<std::vector<double>> rows;
  for (const auto& row : r.trajectory) {
    std::vector<double> v{row.t};
    for (const auto* part : {&row.q, &row.qdot, &row.aero, &row.u1}) v.insert(v.end(), part->begin(), part->end());
    rows.push_back(std::move(v));
  }
  return rows;
}

std::vector<std::vector<double>> sample_rows(const ExperimentResult& r) {
  std::vector<std::vector<double>> rows;
  for (const auto& s : r.samples) {
    std::vector<double> v{s.t};
    v.insert(v.end(), s.x.begin(), s.x.end());
    v.insert(v.end(), s.a.begin(), s.a.end());
    rows.push_back(std::move(v));
  }
  return rows;
}

}  // namespace morphwing::sim
