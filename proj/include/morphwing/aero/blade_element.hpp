#pragma once

#include <Eigen/Dense>

#include "morphwing/aero/constants.hpp"
#include "morphwing/multibody/dynamics.hpp"

namespace morphwing::aero {

/// Below this in-plane airspeed (m/s) the angle of attack is defined as 0.
inline constexpr double kMinAirspeed = 1e-9;

/// Relative flow at one blade element, resolved in its chord frame.
/// Spanwise flow is dropped: only the chord/normal plane contributes.
struct ElementFlow {
  Eigen::Vector3d airspeed = Eigen::Vector3d::Zero();  // air relative to the element, world
  double v_chord = 0.0;   // component along the chord axis (leading -> trailing edge)
  double v_normal = 0.0;  // component along the element normal
  double speed = 0.0;     // in-plane magnitude
  double alpha = 0.0;     // quasi-steady angle of attack, atan2(v_normal, v_chord)
};

ElementFlow resolve_flow(const Eigen::Vector3d& airspeed, const Eigen::Vector3d& chord_axis,
                         const Eigen::Vector3d& normal_axis);

/// Still-air flow at element `e`: airspeed = -(Pjac row block) qdot.
ElementFlow element_kinematics(const multibody::WingKinematics& wing, const Eigen::VectorXd& qdot,
                               std::size_t e);
ElementFlow element_kinematics(const multibody::DynamicsTerms& terms,
                               const multibody::VehicleState& state, std::size_t e);

/// Two-pole indicial lag of one element:
///   xi_j' = (2 speed / c) b_j (A_j alpha_qs - xi_j).
Eigen::Vector2d lag_rates(const AeroConstants& k, double speed, double chord, double alpha_qs,
                          const Eigen::Vector2d& xi);

/// Lagged angle before the stall clamp: (1 - A1 - A2) alpha_qs + xi_1 + xi_2.
double lagged_alpha(const AeroConstants& k, double alpha_qs, const Eigen::Vector2d& xi);
/// lagged_alpha clamped to [-alpha_max, alpha_max].
double effective_alpha(const AeroConstants& k, double alpha_qs, const Eigen::Vector2d& xi);

struct ElementForce {
  Eigen::Vector3d lift = Eigen::Vector3d::Zero();
  Eigen::Vector3d drag = Eigen::Vector3d::Zero();
  double cl = 0.0;
  double cd = 0.0;
};

/// Quasi-steady force on one element of area `area` at effective angle
/// `alpha_eff`. Lift is perpendicular to the in-plane airspeed (within the
/// chord/normal plane), drag is along it.
ElementForce element_force(const AeroConstants& k, const ElementFlow& flow, const Eigen::Vector3d& chord_axis,
                           const Eigen::Vector3d& normal_axis, double area, double alpha_eff);

struct AeroOutput {
  Eigen::MatrixXd lift;          // 3 x p
  Eigen::MatrixXd drag;          // 3 x p
  Eigen::VectorXd alpha_qs;      // p
  Eigen::VectorXd alpha_eff;     // p
  Eigen::VectorXd generalized;   // n_q, Pjac^T (lift + drag)
  Eigen::VectorXd generalized_drag;  // n_q, drag share only

  /// Stacked element forces [F_0; F_1; ...] (3p).
  Eigen::VectorXd stacked() const;
};

/// Lag state layout: xi = [xi_1(e0), xi_2(e0), xi_1(e1), ...], size 2p.
Eigen::VectorXd lag_dynamics(const multibody::DynamicsTerms& terms,
                             const multibody::WingKinematics& wing, const Eigen::VectorXd& qdot,
                             const Eigen::VectorXd& xi);
Eigen::VectorXd lag_dynamics(const multibody::DynamicsTerms& terms,
                             const multibody::VehicleState& state, const Eigen::VectorXd& xi);

AeroOutput element_forces(const multibody::DynamicsTerms& terms, const multibody::WingKinematics& wing,
                          const Eigen::VectorXd& qdot, const Eigen::VectorXd& xi);
AeroOutput element_forces(const multibody::DynamicsTerms& terms, const multibody::VehicleState& state,
                          const Eigen::VectorXd& xi);

}  // namespace morphwing::aero
