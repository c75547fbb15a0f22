#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "morphwing/expr/graph.hpp"
#include "morphwing/expr/tape.hpp"
#include "morphwing/multibody/model.hpp"

namespace morphwing::multibody {

/// Raised when the Euler parameterization is at (or numerically near) its
/// gimbal-lock configuration, or a tape hits a domain guard.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPitchLimitMargin = 1e-3;

struct VehicleState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  double t = 0.0;
};

/// Wraps the base Euler angles into (-pi, pi].
void wrap_euler(const MultibodyModel& model, Eigen::Ref<Eigen::VectorXd> q);
double wrap_angle(double a);

/// Geometry of one blade element (constant along the motion).
struct ElementGeometry {
  std::size_t segment = 0;
  double chord = 0.0;  // m
  double area = 0.0;   // m^2
};

/// The un-optimized symbolic derivation. All outputs live in one graph whose
/// symbols are q_<dof> followed by qd_<dof>, so every evaluator takes x = [q; qdot].
struct SymbolicDynamics {
  expr::ExprGraph graph;
  std::vector<expr::NodeId> mass;      // D, row-major n x n
  std::vector<expr::NodeId> coriolis;  // C, row-major n x n
  std::vector<expr::NodeId> gravity;   // G, n
  std::vector<expr::NodeId> jacobian;  // dP/dq, row-major 3p x n
  std::vector<expr::NodeId> points;    // P, 3p
  std::vector<expr::NodeId> axes;      // per element: chord axis (3) then normal axis (3), world frame
  std::vector<expr::NodeId> energy;    // T, V

  std::vector<expr::NodeId> all_outputs() const;
};

SymbolicDynamics derive_symbolic(const MultibodyModel& model);

struct DerivationStats {
  std::size_t raw_nodes = 0;        // nodes of the raw graph reachable from the outputs
  std::uint64_t expanded_nodes = 0; // same outputs expanded to independent trees
  std::size_t cse_nodes = 0;        // after CSE and constant folding
  // Same three counts for the mass matrix D alone.
  std::size_t mass_raw_nodes = 0;
  std::uint64_t mass_expanded_nodes = 0;
  std::size_t mass_cse_nodes = 0;
  std::size_t tape_instructions = 0;
  std::size_t tape_slots = 0;
  double seconds = 0.0;
};

/// Compiled Lagrangian terms. Every tape takes x = [q; qdot].
struct DynamicsTerms {
  MultibodyModel model;
  std::size_t n_q = 0;
  std::size_t n_a = 0;
  std::size_t n_elements = 0;
  std::vector<ElementGeometry> elements;
  Eigen::MatrixXd B1;  // constant selector [0; I]

  expr::CompiledTape mass, coriolis, gravity, jacobian, points, energy;
  /// D, C, G, dP/dq, P and element axes in one pass (the simulator's tape).
  expr::CompiledTape combined;
  DerivationStats stats;
};

DynamicsTerms derive_dynamics(const MultibodyModel& model);

struct TermValues {
  Eigen::MatrixXd D;
  Eigen::MatrixXd C;
  Eigen::VectorXd G;
  Eigen::MatrixXd B1;
};

/// Quarter-chord kinematics of all blade elements.
struct WingKinematics {
  Eigen::MatrixXd points;   // 3 x p
  Eigen::MatrixXd chord;    // 3 x p, unit chord axis (leading -> trailing edge)
  Eigen::MatrixXd normal;   // 3 x p, unit normal
  Eigen::MatrixXd jacobian; // 3p x n
};

/// Caller-owned scratch for re-entrant evaluation.
struct DynamicsWorkspace {
  std::vector<double> x;
  std::vector<double> slots;
  std::vector<double> out;
};

/// Throws SingularityError when the pitch angle is within the margin of
/// +-pi/2 (models with roll or yaw) or a tape reports a domain error.
void check_configuration(const DynamicsTerms& terms, const Eigen::VectorXd& q);

TermValues eval_terms(const DynamicsTerms& terms, const VehicleState& state);
void eval_terms(const DynamicsTerms& terms, const VehicleState& state, DynamicsWorkspace& ws,
                TermValues& out);

/// Terms and wing kinematics from the combined tape.
void eval_all(const DynamicsTerms& terms, const VehicleState& state, DynamicsWorkspace& ws,
              TermValues& values, WingKinematics& wing);

std::vector<Eigen::Vector3d> quarter_chord_points(const DynamicsTerms& terms,
                                                  const VehicleState& state);
WingKinematics wing_kinematics(const DynamicsTerms& terms, const VehicleState& state);

/// Kinetic and potential energy (T, V).
std::pair<double, double> energy(const DynamicsTerms& terms, const VehicleState& state);

}  // namespace morphwing::multibody
