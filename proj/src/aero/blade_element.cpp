#include "morphwing/aero/blade_element.hpp"

#include <algorithm>
#include <cmath>

namespace morphwing::aero {

ElementFlow resolve_flow(const Eigen::Vector3d& airspeed, const Eigen::Vector3d& chord_axis,
                         const Eigen::Vector3d& normal_axis) {
  ElementFlow f;
  f.airspeed = airspeed;
  f.v_chord = airspeed.dot(chord_axis);
  f.v_normal = airspeed.dot(normal_axis);
  f.speed = std::hypot(f.v_chord, f.v_normal);
  f.alpha = f.speed < kMinAirspeed ? 0.0 : std::atan2(f.v_normal, f.v_chord);
  return f;
}

ElementFlow element_kinematics(const multibody::WingKinematics& wing, const Eigen::VectorXd& qdot,
                               std::size_t e) {
  const auto row = 3 * static_cast<Eigen::Index>(e);
  const Eigen::Vector3d v = -(wing.jacobian.middleRows(row, 3) * qdot);
  const auto col = static_cast<Eigen::Index>(e);
  return resolve_flow(v, wing.chord.col(col), wing.normal.col(col));
}

ElementFlow element_kinematics(const multibody::DynamicsTerms& terms,
                               const multibody::VehicleState& state, std::size_t e) {
  if (e >= terms.n_elements) throw std::out_of_range("element index out of range");
  return element_kinematics(multibody::wing_kinematics(terms, state), state.qdot, e);
}

Eigen::Vector2d lag_rates(const AeroConstants& k, double speed, double chord, double alpha_qs,
                          const Eigen::Vector2d& xi) {
  const double rate = 2.0 * speed / chord;
  return {rate * k.b1 * (k.a1 * alpha_qs - xi[0]), rate * k.b2 * (k.a2 * alpha_qs - xi[1])};
}

double lagged_alpha(const AeroConstants& k, double alpha_qs, const Eigen::Vector2d& xi) {
  return (1.0 - k.a1 - k.a2) * alpha_qs + xi[0] + xi[1];
}

double effective_alpha(const AeroConstants& k, double alpha_qs, const Eigen::Vector2d& xi) {
  return std::clamp(lagged_alpha(k, alpha_qs, xi), -k.alpha_max, k.alpha_max);
}

ElementForce element_force(const AeroConstants& k, const ElementFlow& flow,
                           const Eigen::Vector3d& chord_axis, const Eigen::Vector3d& normal_axis,
                           double area, double alpha_eff) {
  ElementForce out;
  out.cl = k.cl_alpha * alpha_eff;
  out.cd = k.cd0 + k.k_d * out.cl * out.cl;
  if (flow.speed < kMinAirspeed) return out;
  const double qs = 0.5 * k.rho * flow.speed * flow.speed * area;
  const Eigen::Vector3d along = (flow.v_chord * chord_axis + flow.v_normal * normal_axis) / flow.speed;
  const Eigen::Vector3d perp = (-flow.v_normal * chord_axis + flow.v_chord * normal_axis) / flow.speed;
  out.lift = qs * out.cl * perp;
  out.drag = qs * out.cd * along;
  return out;
}

Eigen::VectorXd AeroOutput::stacked() const {
  Eigen::VectorXd f(3 * lift.cols());
  for (Eigen::Index e = 0; e < lift.cols(); ++e) f.segment<3>(3 * e) = lift.col(e) + drag.col(e);
  return f;
}

Eigen::VectorXd lag_dynamics(const multibody::DynamicsTerms& terms,
                             const multibody::WingKinematics& wing, const Eigen::VectorXd& qdot,
                             const Eigen::VectorXd& xi) {
  const auto p = static_cast<Eigen::Index>(terms.n_elements);
  if (xi.size() != 2 * p) throw std::invalid_argument("lag state must have 2 entries per element");
  Eigen::VectorXd rates = Eigen::VectorXd::Zero(2 * p);
  if (!terms.model.aero.enabled) return rates;
  for (Eigen::Index e = 0; e < p; ++e) {
    const auto flow = element_kinematics(wing, qdot, static_cast<std::size_t>(e));
    rates.segment<2>(2 * e) = lag_rates(terms.model.aero, flow.speed,
                                        terms.elements[static_cast<std::size_t>(e)].chord, flow.alpha,
                                        xi.segment<2>(2 * e));
  }
  return rates;
}

Eigen::VectorXd lag_dynamics(const multibody::DynamicsTerms& terms,
                             const multibody::VehicleState& state, const Eigen::VectorXd& xi) {
  return lag_dynamics(terms, multibody::wing_kinematics(terms, state), state.qdot, xi);
}

AeroOutput element_forces(const multibody::DynamicsTerms& terms, const multibody::WingKinematics& wing,
                          const Eigen::VectorXd& qdot, const Eigen::VectorXd& xi) {
  const auto p = static_cast<Eigen::Index>(terms.n_elements);
  if (xi.size() != 2 * p) throw std::invalid_argument("lag state must have 2 entries per element");
  const auto& k = terms.model.aero;
  AeroOutput out;
  out.lift = Eigen::MatrixXd::Zero(3, p);
  out.drag = Eigen::MatrixXd::Zero(3, p);
  out.alpha_qs = Eigen::VectorXd::Zero(p);
  out.alpha_eff = Eigen::VectorXd::Zero(p);
  out.generalized = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(terms.n_q));
  out.generalized_drag = out.generalized;
  if (!k.enabled) return out;
  for (Eigen::Index e = 0; e < p; ++e) {
    const auto flow = element_kinematics(wing, qdot, static_cast<std::size_t>(e));
    const double a = effective_alpha(k, flow.alpha, xi.segment<2>(2 * e));
    const auto f = element_force(k, flow, wing.chord.col(e), wing.normal.col(e),
                                 terms.elements[static_cast<std::size_t>(e)].area, a);
    out.lift.col(e) = f.lift;
    out.drag.col(e) = f.drag;
    out.alpha_qs[e] = flow.alpha;
    out.alpha_eff[e] = a;
  }
  Eigen::VectorXd drag(3 * p);
  for (Eigen::Index e = 0; e < p; ++e) drag.segment<3>(3 * e) = out.drag.col(e);
  out.generalized = wing.jacobian.transpose() * out.stacked();
  out.generalized_drag = wing.jacobian.transpose() * drag;
  return out;
}

AeroOutput element_forces(const multibody::DynamicsTerms& terms, const multibody::VehicleState& state,
                          const Eigen::VectorXd& xi) {
  return element_forces(terms, multibody::wing_kinematics(terms, state), state.qdot, xi);
}

}  // namespace morphwing::aero
