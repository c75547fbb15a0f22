#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphwing/aero/constants.hpp"

namespace morphwing::multibody {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Passive base coordinates. Orientation is Euler ZYX: R = Rz(yaw) Ry(pitch) Rx(roll).
enum class BaseDof { X, Y, Z, Roll, Pitch, Yaw };

const char* base_dof_name(BaseDof dof);

struct LinkSpec {
  double mass = 0.0;                                     // kg
  Eigen::Vector3d com = Eigen::Vector3d::Zero();         // m, in the link frame
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();     // kg m^2, about the COM
};

struct JointSpec {
  std::string name;
  std::string parent = "base";  // "base" or the name of another joint
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();    // unit vector in the parent frame
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();   // joint position in the parent frame
  bool actuated = true;
  double damping = 0.0;  // N m s / rad
  LinkSpec link;
};

/// A rigid wing strip carried by a link. Elements are spaced evenly along
/// `span_axis`, starting from `offset` (the root of the quarter-chord line).
struct WingSegmentSpec {
  std::string name;
  std::string parent;  // joint whose link carries the segment, or "base"
  double chord = 0.0;  // m
  double span = 0.0;   // m
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d chord_axis = -Eigen::Vector3d::UnitX();  // leading edge -> trailing edge
  Eigen::Vector3d span_axis = Eigen::Vector3d::UnitY();
  Eigen::Vector3d normal_axis = Eigen::Vector3d::UnitZ();  // positive lift side
  int n_elem = 4;
};

/// Declarative description of the articulated vehicle.
///
/// Generalized coordinates are ordered q = [q_u; q_a]: the selected base
/// DOFs in the fixed order x, y, z, roll, pitch, yaw, then passive joints,
/// then actuated joints, each group in file order.
struct MultibodyModel {
  int format = 1;
  std::string name;
  double gravity = 9.81;  // m/s^2 along -z
  std::vector<BaseDof> base_dofs;
  LinkSpec body;
  std::vector<double> base_damping;  // one entry per base DOF
  std::vector<JointSpec> joints;
  std::vector<WingSegmentSpec> wing_segments;
  aero::AeroConstants aero;

  std::size_t n_base() const { return base_dofs.size(); }
  std::size_t n_q() const { return base_dofs.size() + joints.size(); }
  std::size_t n_actuated() const;
  std::size_t n_elements() const;

  /// Joints in generalized-coordinate order (passive first, then actuated).
  std::vector<std::size_t> joint_order() const;
  /// Coordinate index of joint `j` (index into `joints`).
  std::size_t joint_coordinate(std::size_t j) const;
  std::vector<std::string> dof_names() const;
  /// Viscous damping coefficient for every generalized coordinate.
  Eigen::VectorXd damping() const;
  /// Coordinate index of a base DOF, if present.
  std::optional<std::size_t> base_index(BaseDof dof) const;
  /// True when the base carries pitch together with roll or yaw, i.e. the
  /// Euler parameterization has a reachable singularity.
  bool has_euler_singularity() const;
  double total_mass() const;
};

/// Checks every structural invariant; throws ModelError with a message
/// naming the offending item.
void validate(const MultibodyModel& model);

/// Parses the versioned JSON model description (`format: 1`).
MultibodyModel parse_model(const std::string& text);
MultibodyModel load_model(const std::filesystem::path& path);

}  // namespace morphwing::multibody
