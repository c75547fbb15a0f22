#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphwing/aero/blade_element.hpp"
#include "morphwing/multibody/dynamics.hpp"

namespace morphwing::sim {

using multibody::DynamicsTerms;
using multibody::VehicleState;

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// q_ref(t) = offset + amplitude sin(2 pi frequency t + phase)
struct JointReference {
  double amplitude = 0.0;  // rad
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
  double offset = 0.0;     // rad
};

struct PdGains {
  double kp = 0.0;  // N m / rad
  double kd = 0.0;  // N m s / rad
};

enum class AccelMode { Model, FiniteDifference };

struct SimConfig {
  double dt = 1e-4;
  double duration = 0.2;
  std::size_t sample_stride = 100;
  std::uint64_t seed = 1;
  PdGains gains;
  std::map<std::string, JointReference> joints;  // by joint name; missing joints hold zero
  std::map<std::string, double> initial_q;       // by DOF name
  std::map<std::string, double> initial_qdot;
  /// Std of a Gaussian perturbation (rad/s or m/s) added to the initial base rates.
  double initial_rate_noise = 0.0;
  /// Start the actuated joints on their reference (position and rate).
  bool start_on_reference = true;
  AccelMode accel_mode = AccelMode::Model;
  std::size_t log_stride = 1;  // trajectory rows every log_stride steps, initial state excluded
};

/// Parses the "sim" block of a JSON configuration (or a bare sim object).
SimConfig parse_sim_config(const std::string& text);
SimConfig load_sim_config(const std::filesystem::path& path);
void validate(const SimConfig& config, const multibody::MultibodyModel& model);

struct Reference {
  Eigen::VectorXd q;     // n_a
  Eigen::VectorXd qdot;  // n_a
};

/// Sinusoidal references for the actuated coordinates, in coordinate order.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory(const multibody::MultibodyModel& model, const SimConfig& config);
  Reference at(double t) const;
  std::size_t size() const { return refs_.size(); }

 private:
  std::vector<JointReference> refs_;
};

/// u1 = kp (q_ref - q_a) + kd (qdot_ref - qdot_a), one entry per actuated DOF.
Eigen::VectorXd pd_tracking_torque(const Eigen::VectorXd& q_a, const Eigen::VectorXd& qdot_a,
                                   const Reference& ref, const PdGains& gains);

using ControlLaw = std::function<Eigen::VectorXd(double t, const VehicleState& s)>;

/// Caller-owned scratch for the dynamics pipeline.
struct SimWorkspace {
  multibody::DynamicsWorkspace dyn;
  multibody::TermValues terms;
  multibody::WingKinematics wing;
};

struct ForwardResult {
  Eigen::VectorXd qddot;
  Eigen::VectorXd xidot;
  Eigen::VectorXd aero_force;     // B2 u2
  Eigen::VectorXd damping_force;  // -c o qdot
  Eigen::VectorXd u1;
};

/// qddot = D^-1 (B1 u1 + B2 u2 - C qdot - G - c o qdot) by Cholesky of D,
/// plus the lag-state rates. Throws SingularityError when D is not positive
/// definite.
ForwardResult forward_dynamics(const DynamicsTerms& terms, const VehicleState& state,
                               const Eigen::VectorXd& xi, const Eigen::VectorXd& u1, SimWorkspace& ws);
ForwardResult forward_dynamics(const DynamicsTerms& terms, const VehicleState& state,
                               const Eigen::VectorXd& xi, const Eigen::VectorXd& u1);

struct SimState {
  VehicleState vehicle;
  Eigen::VectorXd xi;  // 2 per blade element
};

/// One classical RK4 step of [q; qdot; xi], u1 evaluated at substep times.
/// Euler angles are wrapped afterwards. Throws DivergenceError on non-finite values.
SimState step_rk4(const DynamicsTerms& terms, const SimState& s, const ControlLaw& law, double dt,
                  SimWorkspace& ws);

struct TrainingSample {
  double t = 0.0;
  Eigen::VectorXd x;  // [q; qdot]
  Eigen::VectorXd a;  // generalized aerodynamic force
};

/// a = D qddot + C qdot + G - B1 u1 + c o qdot (damping removed with u1).
TrainingSample extract_training_sample(const DynamicsTerms& terms, const VehicleState& state,
                                       const Eigen::VectorXd& qddot, const Eigen::VectorXd& u1);

struct TrajectoryRow {
  double t = 0.0;
  Eigen::VectorXd q, qdot, aero, u1;
};

struct ExperimentResult {
  std::vector<TrajectoryRow> trajectory;
  std::vector<TrainingSample> samples;
  /// Applied B2 u2 at each sample instant (the closure reference).
  std::vector<Eigen::VectorXd> applied_aero;
  double tracking_rms = 0.0;  // rad, over all actuated DOFs and steps
};

SimState initial_state(const DynamicsTerms& terms, const SimConfig& config);

/// Fixed-step run. Samples are taken every `sample_stride` steps after the
/// initial state, so duration/dt/stride = 0.2/1e-4/100 yields 20 samples.
ExperimentResult run_experiment(const DynamicsTerms& terms, const SimConfig& config);

std::vector<std::string> trajectory_header(const DynamicsTerms& terms);
std::vector<std::string> sample_header(const DynamicsTerms& terms);
std::vector<std::vector<double>> trajectory_rows(const ExperimentResult& r);
std::vector<std::vector<double>> sample_rows(const ExperimentResult& r);

}  // namespace morphwing::sim
