#include <array>
#include <chrono>
#include <cmath>
#include <map>

#include "morphwing/multibody/dynamics.hpp"

namespace morphwing::multibody {

using expr::ExprGraph;
using expr::NodeId;
using expr::Sym;

namespace {

using Vec3 = std::array<Sym, 3>;
using Mat3 = std::array<Vec3, 3>;  // rows

struct Builder {
  ExprGraph& g;

  Sym c(double v) const { return {g, g.constant(v)}; }
  Vec3 vec(const Eigen::Vector3d& v) const { return {c(v.x()), c(v.y()), c(v.z())}; }
  Mat3 identity() const {
    return {Vec3{c(1), c(0), c(0)}, Vec3{c(0), c(1), c(0)}, Vec3{c(0), c(0), c(1)}};
  }

  Vec3 add(const Vec3& a, const Vec3& b) const { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
  Vec3 scale(const Vec3& a, const Sym& s) const { return {a[0] * s, a[1] * s, a[2] * s}; }
  Sym dot(const Vec3& a, const Vec3& b) const { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
  Vec3 cross(const Vec3& a, const Vec3& b) const {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  }
  Vec3 mul(const Mat3& m, const Vec3& v) const {
    return {dot(m[0], v), dot(m[1], v), dot(m[2], v)};
  }
  Vec3 mul_t(const Mat3& m, const Vec3& v) const {
    return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
  }
  Mat3 mul(const Mat3& a, const Mat3& b) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    return r;
  }

  // Rotation by `angle` about a constant unit axis. Coordinate axes get the
  // elementary matrices so no 1-c+c style round-off enters the graph.
  Mat3 rotation(const Eigen::Vector3d& axis, const Sym& angle) const {
    const Sym cs = cos(angle);
    Sym sn = sin(angle);
    for (int k = 0; k < 3; ++k) {
      if (std::abs(std::abs(axis[k]) - 1.0) > 0.0) continue;
      if (axis[k] < 0) sn = -sn;
      Mat3 r = identity();
      const int i = (k + 1) % 3, j = (k + 2) % 3;
      r[i][i] = cs;
      r[j][j] = cs;
      r[i][j] = -sn;
      r[j][i] = sn;
      return r;
    }
    // Rodrigues: R = c I + s [a]x + (1 - c) a a^T
    const Sym one_c = 1.0 - cs;
    const Eigen::Vector3d& a = axis;
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r[i][j] = one_c * (a[i] * a[j]);
    for (int i = 0; i < 3; ++i) r[i][i] = r[i][i] + cs;
    r[0][1] = r[0][1] - sn * a[2];
    r[0][2] = r[0][2] + sn * a[1];
    r[1][0] = r[1][0] + sn * a[2];
    r[1][2] = r[1][2] - sn * a[0];
    r[2][0] = r[2][0] - sn * a[1];
    r[2][1] = r[2][1] + sn * a[0];
    return r;
  }
};

struct Frame {
  Vec3 p;  // origin relative to the base origin, world axes
  Mat3 R;  // link -> world
  Vec3 v;  // origin velocity
  Vec3 w;  // angular velocity, world
};

}  // namespace

std::vector<NodeId> SymbolicDynamics::all_outputs() const {
  std::vector<NodeId> out;
  for (const auto* v : {&mass, &coriolis, &gravity, &jacobian, &points, &axes, &energy})
    out.insert(out.end(), v->begin(), v->end());
  return out;
}

SymbolicDynamics derive_symbolic(const MultibodyModel& model) {
  validate(model);
  SymbolicDynamics sd;
  ExprGraph& g = sd.graph;
  Builder b{g};
  const std::size_t n = model.n_q();
  const auto names = model.dof_names();

  std::vector<Sym> q, qd;
  for (const auto& nm : names) q.emplace_back(g, g.symbol("q_" + nm));
  for (const auto& nm : names) qd.emplace_back(g, g.symbol("qd_" + nm));

  // Base frame.
  auto coord = [&](BaseDof d) -> std::pair<Sym, Sym> {
    if (auto i = model.base_index(d)) return {q[*i], qd[*i]};
    return {b.c(0), b.c(0)};
  };
  const auto [x, xd] = coord(BaseDof::X);
  const auto [y, yd] = coord(BaseDof::Y);
  const auto [z, zd] = coord(BaseDof::Z);
  const auto [roll, rolld] = coord(BaseDof::Roll);
  const auto [pitch, pitchd] = coord(BaseDof::Pitch);
  const auto [yaw, yawd] = coord(BaseDof::Yaw);

  Mat3 Rz = b.identity(), Ry = b.identity(), Rx = b.identity();
  if (model.base_index(BaseDof::Yaw)) Rz = b.rotation(Eigen::Vector3d::UnitZ(), yaw);
  if (model.base_index(BaseDof::Pitch)) Ry = b.rotation(Eigen::Vector3d::UnitY(), pitch);
  if (model.base_index(BaseDof::Roll)) Rx = b.rotation(Eigen::Vector3d::UnitX(), roll);
  const Mat3 Rzy = b.mul(Rz, Ry);

  // Positions are accumulated relative to the base origin and the base
  // translation is added last, so a pure translation shifts them exactly.
  const Vec3 origin{x, y, z};
  Frame base;
  base.p = {b.c(0), b.c(0), b.c(0)};
  base.R = b.mul(Rzy, Rx);
  base.v = {xd, yd, zd};
  // ZYX rates: yaw about world z, pitch about the once-rotated y, roll about the body x.
  base.w = b.add(b.add(b.scale(b.vec(Eigen::Vector3d::UnitZ()), yawd),
                       b.scale(b.mul(Rz, b.vec(Eigen::Vector3d::UnitY())), pitchd)),
                 b.scale(b.mul(Rzy, b.vec(Eigen::Vector3d::UnitX())), rolld));

  Sym T = b.c(0), V = b.c(0);
  auto add_link = [&](const Frame& f, const LinkSpec& link) {
    const Vec3 rc = b.mul(f.R, b.vec(link.com));
    const Vec3 vc = b.add(f.v, b.cross(f.w, rc));
    const Vec3 wb = b.mul_t(f.R, f.w);
    Vec3 Iw;
    for (int i = 0; i < 3; ++i)
      Iw[i] = wb[0] * link.inertia(i, 0) + wb[1] * link.inertia(i, 1) + wb[2] * link.inertia(i, 2);
    T = T + 0.5 * link.mass * b.dot(vc, vc) + 0.5 * b.dot(wb, Iw);
    V = V + link.mass * model.gravity * (origin[2] + (f.p[2] + rc[2]));
  };
  if (model.n_base() > 0) add_link(base, model.body);

  // Joint frames, resolved parent-first.
  std::map<std::string, Frame> frames{{"base", base}};
  std::vector<bool> done(model.joints.size(), false);
  for (std::size_t pass = 0; pass < model.joints.size(); ++pass) {
    for (std::size_t j = 0; j < model.joints.size(); ++j) {
      const auto& joint = model.joints[j];
      if (done[j] || !frames.count(joint.parent)) continue;
      const Frame& P = frames.at(joint.parent);
      const std::size_t k = model.joint_coordinate(j);
      const Vec3 ro = b.mul(P.R, b.vec(joint.origin));
      Frame f;
      f.p = b.add(P.p, ro);
      f.v = b.add(P.v, b.cross(P.w, ro));
      f.R = b.mul(P.R, b.rotation(joint.axis, q[k]));
      f.w = b.add(P.w, b.scale(b.mul(P.R, b.vec(joint.axis)), qd[k]));
      add_link(f, joint.link);
      frames.emplace(joint.name, f);
      done[j] = true;
    }
  }

  // Quarter-chord points and element axes.
  std::vector<Sym> P;
  for (const auto& seg : model.wing_segments) {
    const Frame& f = frames.at(seg.parent);
    const Vec3 chord = b.mul(f.R, b.vec(seg.chord_axis));
    const Vec3 normal = b.mul(f.R, b.vec(seg.normal_axis));
    for (int i = 0; i < seg.n_elem; ++i) {
      const Eigen::Vector3d local = seg.offset + seg.span_axis * (seg.span * (i + 0.5) / seg.n_elem);
      const Vec3 p = b.add(origin, b.add(f.p, b.mul(f.R, b.vec(local))));
      for (int r = 0; r < 3; ++r) {
        P.push_back(p[r]);
        sd.points.push_back(p[r].id());
      }
      for (int r = 0; r < 3; ++r) sd.axes.push_back(chord[r].id());
      for (int r = 0; r < 3; ++r) sd.axes.push_back(normal[r].id());
    }
  }

  std::vector<NodeId> q_ids, qd_ids;
  for (std::size_t i = 0; i < n; ++i) {
    q_ids.push_back(q[i].id());
    qd_ids.push_back(qd[i].id());
  }

  // D = d^2 T / dqd dqd^T (upper triangle, mirrored).
  const auto dT = expr::differentiate(g, T.id(), qd_ids);
  std::vector<NodeId> D(n * n, expr::kNoNode);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = expr::differentiate(g, dT[i], qd_ids);
    for (std::size_t j = i; j < n; ++j) {
      D[i * n + j] = row[j];
      D[j * n + i] = row[j];
    }
  }
  sd.mass = D;

  // dD[i][j][k] = dD_ij / dq_k
  std::vector<std::vector<NodeId>> dD(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      dD[i * n + j] = expr::differentiate(g, D[i * n + j], q_ids);
      dD[j * n + i] = dD[i * n + j];
    }
  }
  // Christoffel form: C_ij = sum_k 1/2 (dD_ij/dq_k + dD_ik/dq_j - dD_jk/dq_i) qd_k
  sd.coriolis.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Sym cij = b.c(0);
      for (std::size_t k = 0; k < n; ++k) {
        const Sym gamma = Sym(g, dD[i * n + j][k]) + Sym(g, dD[i * n + k][j]) - Sym(g, dD[j * n + k][i]);
        if (gamma.is_zero()) continue;
        cij = cij + 0.5 * gamma * qd[k];
      }
      sd.coriolis[i * n + j] = cij.id();
    }
  }

  sd.gravity = expr::differentiate(g, V.id(), q_ids);

  for (const Sym& p : P) {
    const auto row = expr::differentiate(g, p.id(), q_ids);
    sd.jacobian.insert(sd.jacobian.end(), row.begin(), row.end());
  }
  sd.energy = {T.id(), V.id()};
  return sd;
}

namespace {

std::vector<std::string> matrix_names(const char* prefix, std::size_t rows, std::size_t cols) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      names.push_back(std::string(prefix) + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
  return names;
}

template <typename T, typename... V>
std::vector<T> concat(const std::vector<T>& first, const V&... parts) {
  std::vector<T> out = first;
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
  return out;
}

}  // namespace

DynamicsTerms derive_dynamics(const MultibodyModel& model) {
  const auto start = std::chrono::steady_clock::now();
  SymbolicDynamics sd = derive_symbolic(model);
  const auto roots = sd.all_outputs();

  DynamicsTerms terms;
  terms.model = model;
  terms.n_q = model.n_q();
  terms.n_a = model.n_actuated();
  terms.n_elements = model.n_elements();
  for (std::size_t s = 0; s < model.wing_segments.size(); ++s) {
    const auto& seg = model.wing_segments[s];
    for (int i = 0; i < seg.n_elem; ++i)
      terms.elements.push_back({s, seg.chord, seg.chord * seg.span / seg.n_elem});
  }
  const auto n = static_cast<Eigen::Index>(terms.n_q);
  const auto na = static_cast<Eigen::Index>(terms.n_a);
  terms.B1 = Eigen::MatrixXd::Zero(n, na);
  terms.B1.bottomRows(na).setIdentity();

  terms.stats.raw_nodes = expr::reachable_nodes(sd.graph, roots).size();
  terms.stats.expanded_nodes = expr::expanded_tree_size(sd.graph, roots);

  const expr::CseResult opt = expr::cse(sd.graph, roots);
  terms.stats.cse_nodes = expr::reachable_nodes(opt.graph, opt.map(roots)).size();
  terms.stats.mass_raw_nodes = expr::reachable_nodes(sd.graph, sd.mass).size();
  terms.stats.mass_expanded_nodes = expr::expanded_tree_size(sd.graph, sd.mass);
  terms.stats.mass_cse_nodes = expr::reachable_nodes(opt.graph, opt.map(sd.mass)).size();

  const std::size_t p = terms.n_elements;
  const auto nq = terms.n_q;
  const auto D_names = matrix_names("D", nq, nq);
  const auto C_names = matrix_names("C", nq, nq);
  const auto G_names = matrix_names("G", nq, 1);
  const auto J_names = matrix_names("Pjac", 3 * p, nq);
  const auto P_names = matrix_names("P", p, 3);
  std::vector<std::string> A_names;
  for (std::size_t e = 0; e < p; ++e) {
    for (int r = 0; r < 3; ++r) A_names.push_back("chord[" + std::to_string(e) + "," + std::to_string(r) + "]");
    for (int r = 0; r < 3; ++r) A_names.push_back("normal[" + std::to_string(e) + "," + std::to_string(r) + "]");
  }

  terms.mass = expr::compile(opt.graph, opt.map(sd.mass), D_names);
  terms.coriolis = expr::compile(opt.graph, opt.map(sd.coriolis), C_names);
  terms.gravity = expr::compile(opt.graph, opt.map(sd.gravity), G_names);
  terms.jacobian = expr::compile(opt.graph, opt.map(sd.jacobian), J_names);
  terms.points = expr::compile(opt.graph, opt.map(concat(sd.points, sd.axes)), concat(P_names, A_names));
  terms.energy = expr::compile(opt.graph, opt.map(sd.energy), {"T", "V"});

  std::vector<NodeId> combined;
  for (const auto* v : {&sd.mass, &sd.coriolis, &sd.gravity, &sd.jacobian, &sd.points, &sd.axes})
    combined.insert(combined.end(), v->begin(), v->end());
  terms.combined = expr::compile(opt.graph, opt.map(combined),
                                 concat(D_names, C_names, G_names, J_names, P_names, A_names));
  terms.stats.tape_instructions = terms.combined.instructions().size();
  terms.stats.tape_slots = terms.combined.n_slots();
  terms.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return terms;
}

}  // namespace morphwing::multibody
