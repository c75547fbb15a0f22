#include "morphwing/multibody/model.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace morphwing::multibody {

using nlohmann::json;

const char* base_dof_name(BaseDof dof) {
  switch (dof) {
    case BaseDof::X: return "x";
    case BaseDof::Y: return "y";
    case BaseDof::Z: return "z";
    case BaseDof::Roll: return "roll";
    case BaseDof::Pitch: return "pitch";
    case BaseDof::Yaw: return "yaw";
  }
  return "?";
}

std::size_t MultibodyModel::n_actuated() const {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.actuated ? 1 : 0;
  return n;
}

std::size_t MultibodyModel::n_elements() const {
  std::size_t n = 0;
  for (const auto& s : wing_segments) n += static_cast<std::size_t>(s.n_elem);
  return n;
}

std::vector<std::size_t> MultibodyModel::joint_order() const {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (!joints[j].actuated) order.push_back(j);
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (joints[j].actuated) order.push_back(j);
  return order;
}

std::size_t MultibodyModel::joint_coordinate(std::size_t j) const {
  const auto order = joint_order();
  for (std::size_t k = 0; k < order.size(); ++k)
    if (order[k] == j) return base_dofs.size() + k;
  throw std::out_of_range("joint_coordinate: no such joint");
}

std::vector<std::string> MultibodyModel::dof_names() const {
  std::vector<std::string> names;
  for (BaseDof d : base_dofs) names.emplace_back(base_dof_name(d));
  for (std::size_t j : joint_order()) names.push_back(joints[j].name);
  return names;
}

Eigen::VectorXd MultibodyModel::damping() const {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_q()));
  for (std::size_t i = 0; i < base_dofs.size() && i < base_damping.size(); ++i)
    c[static_cast<Eigen::Index>(i)] = base_damping[i];
  const auto order = joint_order();
  for (std::size_t k = 0; k < order.size(); ++k)
    c[static_cast<Eigen::Index>(base_dofs.size() + k)] = joints[order[k]].damping;
  return c;
}

std::optional<std::size_t> MultibodyModel::base_index(BaseDof dof) const {
  for (std::size_t i = 0; i < base_dofs.size(); ++i)
    if (base_dofs[i] == dof) return i;
  return std::nullopt;
}

bool MultibodyModel::has_euler_singularity() const {
  return base_index(BaseDof::Pitch) &&
         (base_index(BaseDof::Roll) || base_index(BaseDof::Yaw));
}

double MultibodyModel::total_mass() const {
  double m = body.mass;
  for (const auto& j : joints) m += j.link.mass;
  return m;
}

namespace {

void check_link(const LinkSpec& link, const std::string& who) {
  if (!(link.mass > 0.0) || !std::isfinite(link.mass))
    throw ModelError("link '" + who + "' must have positive mass");
  if (!link.com.allFinite() || !link.inertia.allFinite())
    throw ModelError("link '" + who + "' has non-finite geometry");
  const double scale = std::max(link.inertia.cwiseAbs().maxCoeff(), 1e-300);
  if ((link.inertia - link.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ModelError("link '" + who + "' inertia is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(link.inertia);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
    throw ModelError("link '" + who + "' inertia is not positive semidefinite");
}

void check_unit(const Eigen::Vector3d& v, const std::string& what) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-9)
    throw ModelError(what + " must be a unit vector");
}

}  // namespace

void validate(const MultibodyModel& model) {
  if (model.format != 1) throw ModelError("unsupported model format " + std::to_string(model.format));
  if (!std::isfinite(model.gravity)) throw ModelError("gravity must be finite");

  std::set<BaseDof> seen_dofs;
  for (BaseDof d : model.base_dofs)
    if (!seen_dofs.insert(d).second)
      throw ModelError(std::string("base DOF '") + base_dof_name(d) + "' listed twice");
  if (!model.base_damping.empty() && model.base_damping.size() != model.base_dofs.size())
    throw ModelError("base damping must have one entry per base DOF");
  for (double c : model.base_damping)
    if (!(c >= 0.0)) throw ModelError("damping coefficients must be non-negative");
  if (!model.base_dofs.empty()) check_link(model.body, "base");
  if (model.n_q() == 0) throw ModelError("model has no degrees of freedom");

  std::map<std::string, std::size_t> by_name;
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    const auto& joint = model.joints[j];
    if (joint.name.empty() || joint.name == "base")
      throw ModelError("joint name must be non-empty and not 'base'");
    for (BaseDof d : {BaseDof::X, BaseDof::Y, BaseDof::Z, BaseDof::Roll, BaseDof::Pitch, BaseDof::Yaw})
      if (joint.name == base_dof_name(d))
        throw ModelError("joint name '" + joint.name + "' collides with a base DOF");
    if (!by_name.emplace(joint.name, j).second)
      throw ModelError("joint '" + joint.name + "' appears more than once");
    check_unit(joint.axis, "axis of joint '" + joint.name + "'");
    if (!joint.origin.allFinite()) throw ModelError("joint '" + joint.name + "' origin not finite");
    if (!(joint.damping >= 0.0)) throw ModelError("damping coefficients must be non-negative");
    check_link(joint.link, joint.name);
  }
  // Every parent chain must reach the base without revisiting a joint.
  for (const auto& joint : model.joints) {
    std::set<std::string> chain{joint.name};
    std::string p = joint.parent;
    while (p != "base") {
      auto it = by_name.find(p);
      if (it == by_name.end())
        throw ModelError("joint '" + joint.name + "' has unknown parent '" + p + "'");
      if (!chain.insert(p).second)
        throw ModelError("kinematic loop through joint '" + p + "'");
      p = model.joints[it->second].parent;
    }
  }

  std::set<std::string> seg_names;
  for (const auto& s : model.wing_segments) {
    if (!s.name.empty() && !seg_names.insert(s.name).second)
      throw ModelError("wing segment '" + s.name + "' appears more than once");
    if (s.parent != "base" && !by_name.count(s.parent))
      throw ModelError("wing segment '" + s.name + "' has unknown parent '" + s.parent + "'");
    if (!(s.chord > 0.0) || !(s.span > 0.0))
      throw ModelError("wing segment '" + s.name + "' needs positive chord and span");
    if (s.n_elem < 1) throw ModelError("wing segment '" + s.name + "' needs n_elem >= 1");
    check_unit(s.chord_axis, "chord_axis of '" + s.name + "'");
    check_unit(s.span_axis, "span_axis of '" + s.name + "'");
    check_unit(s.normal_axis, "normal_axis of '" + s.name + "'");
    if (std::abs(s.chord_axis.dot(s.normal_axis)) > 1e-9 ||
        std::abs(s.chord_axis.dot(s.span_axis)) > 1e-9 ||
        std::abs(s.span_axis.dot(s.normal_axis)) > 1e-9)
      throw ModelError("wing segment '" + s.name + "' axes must be orthogonal");
  }

  const auto& a = model.aero;
  if (!(a.rho >= 0.0) || !(a.alpha_max > 0.0) || !(a.b1 > 0.0) || !(a.b2 > 0.0) ||
      a.a1 < 0.0 || a.a2 < 0.0 || a.a1 + a.a2 > 1.0)
    throw ModelError("aero constants violate rho>=0, alpha_max>0, b1,b2>0, A1,A2>=0, A1+A2<=1");
}

namespace {

Eigen::Vector3d vec3(const json& j, const char* key, const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ModelError(std::string("'") + key + "' must be a 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

LinkSpec parse_link(const json& j) {
  LinkSpec link;
  link.mass = j.at("mass").get<double>();
  link.com = vec3(j, "com", Eigen::Vector3d::Zero());
  if (j.contains("inertia")) {
    const auto& a = j.at("inertia");
    if (!a.is_array() || a.size() != 6)
      throw ModelError("inertia must be [Ixx, Iyy, Izz, Ixy, Ixz, Iyz]");
    const double ixx = a[0], iyy = a[1], izz = a[2], ixy = a[3], ixz = a[4], iyz = a[5];
    link.inertia << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
  }
  return link;
}

BaseDof parse_dof(const std::string& s) {
  for (BaseDof d : {BaseDof::X, BaseDof::Y, BaseDof::Z, BaseDof::Roll, BaseDof::Pitch, BaseDof::Yaw})
    if (s == base_dof_name(d)) return d;
  throw ModelError("unknown base DOF '" + s + "'");
}

}  // namespace

MultibodyModel parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model file is not valid JSON: ") + e.what());
  }
  MultibodyModel m;
  try {
    if (!doc.contains("format")) throw ModelError("model file lacks a 'format' field");
    m.format = doc.at("format").get<int>();
    if (m.format != 1) throw ModelError("unsupported model format " + std::to_string(m.format));
    m.name = doc.value("name", "");
    m.gravity = doc.value("gravity", 9.81);

    if (doc.contains("base")) {
      const auto& b = doc.at("base");
      std::vector<BaseDof> requested;
      for (const auto& d : b.value("dofs", json::array())) requested.push_back(parse_dof(d.get<std::string>()));
      // Coordinates are always stored in canonical order.
      for (BaseDof d : {BaseDof::X, BaseDof::Y, BaseDof::Z, BaseDof::Roll, BaseDof::Pitch, BaseDof::Yaw}) {
        const auto n = std::count(requested.begin(), requested.end(), d);
        if (n > 1) throw ModelError(std::string("base DOF '") + base_dof_name(d) + "' listed twice");
        if (n == 1) m.base_dofs.push_back(d);
      }
      if (b.contains("link")) m.body = parse_link(b.at("link"));
      if (b.contains("damping")) {
        const auto& dmp = b.at("damping");
        for (BaseDof d : m.base_dofs) m.base_damping.push_back(dmp.value(base_dof_name(d), 0.0));
        for (auto it = dmp.begin(); it != dmp.end(); ++it) {
          const BaseDof d = parse_dof(it.key());
          if (std::find(m.base_dofs.begin(), m.base_dofs.end(), d) == m.base_dofs.end())
            throw ModelError("damping given for absent base DOF '" + it.key() + "'");
        }
      } else {
        m.base_damping.assign(m.base_dofs.size(), 0.0);
      }
    }

    for (const auto& jj : doc.value("joints", json::array())) {
      JointSpec j;
      j.name = jj.at("name").get<std::string>();
      j.parent = jj.value("parent", "base");
      j.axis = vec3(jj, "axis", Eigen::Vector3d::UnitZ());
      j.origin = vec3(jj, "origin", Eigen::Vector3d::Zero());
      j.actuated = jj.value("actuated", true);
      j.damping = jj.value("damping", 0.0);
      if (!jj.contains("link")) throw ModelError("joint '" + j.name + "' lacks a link");
      j.link = parse_link(jj.at("link"));
      m.joints.push_back(std::move(j));
    }

    for (const auto& sj : doc.value("wing_segments", json::array())) {
      WingSegmentSpec s;
      s.name = sj.value("name", "");
      s.parent = sj.at("parent").get<std::string>();
      s.chord = sj.at("chord").get<double>();
      s.span = sj.at("span").get<double>();
      s.offset = vec3(sj, "offset", Eigen::Vector3d::Zero());
      s.chord_axis = vec3(sj, "chord_axis", -Eigen::Vector3d::UnitX());
      s.span_axis = vec3(sj, "span_axis", Eigen::Vector3d::UnitY());
      s.normal_axis = vec3(sj, "normal_axis", Eigen::Vector3d::UnitZ());
      s.n_elem = sj.value("n_elem", 4);
      m.wing_segments.push_back(std::move(s));
    }

    if (doc.contains("aero")) {
      const auto& a = doc.at("aero");
      auto& c = m.aero;
      c.enabled = a.value("enabled", c.enabled);
      c.rho = a.value("rho", c.rho);
      c.cl_alpha = a.value("cl_alpha", c.cl_alpha);
      c.alpha_max = a.value("alpha_max", c.alpha_max);
      c.cd0 = a.value("cd0", c.cd0);
      c.k_d = a.value("k_d", c.k_d);
      c.a1 = a.value("A1", c.a1);
      c.b1 = a.value("b1", c.b1);
      c.a2 = a.value("A2", c.a2);
      c.b2 = a.value("b2", c.b2);
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
  validate(m);
  return m;
}

MultibodyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace morphwing::multibody
