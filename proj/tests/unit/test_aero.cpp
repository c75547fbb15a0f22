#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "morphwing/aero/blade_element.hpp"

using namespace morphwing;
using namespace morphwing::aero;
using multibody::DynamicsTerms;
using multibody::VehicleState;

namespace {

const DynamicsTerms& aerobat() {
  static const DynamicsTerms t = multibody::derive_dynamics(
      multibody::load_model(std::string(MORPHWING_SOURCE_DIR) + "/models/aerobat-lite.mdl"));
  return t;
}

VehicleState rest(const DynamicsTerms& t) {
  return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.n_q)),
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.n_q)), 0.0};
}

// Forward flight with arbitrary attitude, wing pose and rates.
VehicleState fuzzed(std::mt19937_64& rng, const DynamicsTerms& t) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VehicleState s = rest(t);
  for (Eigen::Index i = 0; i < s.q.size(); ++i) {
    s.q[i] = 0.8 * u(rng);
    s.qdot[i] = 3.0 * u(rng);
  }
  s.qdot[0] = 3.0 + u(rng);
  return s;
}

Eigen::VectorXd random_xi(std::mt19937_64& rng, std::size_t p) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Eigen::VectorXd xi(2 * static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = u(rng);
  return xi;
}

}  // namespace

TEST(ElementKinematics, RestHasNoFlow) {
  const auto& t = aerobat();
  const auto s = rest(t);
  for (std::size_t e = 0; e < t.n_elements; ++e) {
    const auto f = element_kinematics(t, s, e);
    EXPECT_EQ(f.airspeed.norm(), 0.0);
    EXPECT_EQ(f.alpha, 0.0);
  }
  const auto out = element_forces(t, s, Eigen::VectorXd::Zero(16));
  EXPECT_EQ(out.generalized.norm(), 0.0);
  EXPECT_EQ(out.stacked().norm(), 0.0);
}

TEST(ElementKinematics, DownwardHeaveIsNinetyDegrees) {
  const auto& t = aerobat();
  auto s = rest(t);
  s.qdot[2] = -1.0;
  for (std::size_t e = 0; e < t.n_elements; ++e)
    EXPECT_NEAR(element_kinematics(t, s, e).alpha, std::numbers::pi / 2, 1e-15);
  s.qdot[2] = 1.0;
  for (std::size_t e = 0; e < t.n_elements; ++e)
    EXPECT_NEAR(element_kinematics(t, s, e).alpha, -std::numbers::pi / 2, 1e-15);
  // Forward flight at zero incidence.
  s.qdot[2] = 0.0;
  s.qdot[0] = 2.0;
  for (std::size_t e = 0; e < t.n_elements; ++e) EXPECT_EQ(element_kinematics(t, s, e).alpha, 0.0);
}

TEST(ElementKinematics, AlphaMatchesFiniteDifferenceOfMotion) {
  const auto& t = aerobat();
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto s = fuzzed(rng, t);
    const auto wing = multibody::wing_kinematics(t, s);
    // Oracle: element velocity by central difference of positions along the motion.
    const double h = 1e-5;
    auto sp = s, sm = s;
    sp.q += h * s.qdot;
    sm.q -= h * s.qdot;
    const auto pp = multibody::quarter_chord_points(t, sp);
    const auto pm = multibody::quarter_chord_points(t, sm);
    for (std::size_t e = 0; e < t.n_elements; ++e) {
      const Eigen::Vector3d air = -(pp[e] - pm[e]) / (2 * h);
      const auto col = static_cast<Eigen::Index>(e);
      const double a_ref = std::atan2(air.dot(wing.normal.col(col)), air.dot(wing.chord.col(col)));
      EXPECT_NEAR(element_kinematics(wing, s.qdot, e).alpha, a_ref, 1e-6) << "state " << k;
    }
  }
}

TEST(LagDynamics, EquilibriumAndTimeScaling) {
  const AeroConstants k;
  EXPECT_EQ(lag_rates(k, 5.0, 0.05, 0.0, Eigen::Vector2d::Zero()).norm(), 0.0);
  const Eigen::Vector2d xi(0.01, -0.02);
  const Eigen::Vector2d r1 = lag_rates(k, 3.0, 0.05, 0.2, xi);
  const Eigen::Vector2d r2 = lag_rates(k, 6.0, 0.05, 0.2, xi);
  EXPECT_NEAR((r2 - 2 * r1).norm(), 0.0, 1e-14 * r1.norm());
}

TEST(LagDynamics, StepResponseMatchesFirstOrderClosedForm) {
  const AeroConstants k;
  const double speed = 4.0, chord = 0.06, alpha = 0.2;
  const double tau1 = chord / (2 * speed * k.b1), tau2 = chord / (2 * speed * k.b2);
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  const double dt = 1e-4;
  double t = 0.0;
  EXPECT_NEAR(lagged_alpha(k, alpha, xi), (1 - k.a1 - k.a2) * alpha, 1e-15);
  for (int step = 0; step < 20000; ++step) {
    auto f = [&](const Eigen::Vector2d& x) { return lag_rates(k, speed, chord, alpha, x); };
    const Eigen::Vector2d k1 = f(xi), k2 = f(xi + 0.5 * dt * k1), k3 = f(xi + 0.5 * dt * k2),
                          k4 = f(xi + dt * k3);
    xi += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += dt;
    if (step % 2000 == 1999) {
      const double lag1 = k.a1 * alpha * (1 - std::exp(-t / tau1));
      const double lag2 = k.a2 * alpha * (1 - std::exp(-t / tau2));
      EXPECT_NEAR(xi[0], lag1, 1e-12);
      EXPECT_NEAR(xi[1], lag2, 1e-12);
    }
  }
  // The lag share approaches (A1 + A2) of the quasi-steady value.
  EXPECT_NEAR((xi[0] + xi[1]) / alpha, k.a1 + k.a2, 1e-4);
}

TEST(LagDynamics, AffineInLagState) {
  const auto& t = aerobat();
  std::mt19937_64 rng(12);
  for (int k = 0; k < 20; ++k) {
    const auto s = fuzzed(rng, t);
    const auto xi = random_xi(rng, t.n_elements);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(xi.size());
    const Eigen::VectorXd f0 = lag_dynamics(t, s, zero);
    const Eigen::VectorXd f1 = lag_dynamics(t, s, xi);
    const Eigen::VectorXd f2 = lag_dynamics(t, s, 2 * xi);
    EXPECT_LT((f2 - f0 - 2 * (f1 - f0)).norm(), 1e-12 * (f1.norm() + f0.norm() + 1.0));
    // Output row of the lag system: the lagged angle.
    const auto out0 = element_forces(t, s, zero);
    for (std::size_t e = 0; e < t.n_elements; ++e) {
      const auto a = out0.alpha_qs[static_cast<Eigen::Index>(e)];
      const Eigen::Vector2d x = xi.segment<2>(2 * static_cast<Eigen::Index>(e));
      const AeroConstants& c = t.model.aero;
      const double h0 = lagged_alpha(c, a, Eigen::Vector2d::Zero());
      EXPECT_NEAR(lagged_alpha(c, a, 2 * x) - h0, 2 * (lagged_alpha(c, a, x) - h0), 1e-15);
    }
  }
}

TEST(ElementForce, HandEvaluatedLift) {
  AeroConstants k;
  k.rho = 1.225;
  k.cl_alpha = 2 * std::numbers::pi;
  const Eigen::Vector3d chord = Eigen::Vector3d::UnitX(), normal = Eigen::Vector3d::UnitZ();
  const auto flow = resolve_flow(Eigen::Vector3d(10, 0, 0), chord, normal);
  const auto f = element_force(k, flow, chord, normal, 1e-3, 0.1);
  const double expected = 0.5 * 1.225 * 100 * 1e-3 * 2 * std::numbers::pi * 0.1;
  EXPECT_NEAR(f.lift.norm(), expected, 1e-15);
  EXPECT_NEAR(f.lift.norm(), 0.03848, 1e-5);
  EXPECT_NEAR(f.lift.dot(flow.airspeed), 0.0, 1e-15);
  EXPECT_GT(f.lift.z(), 0.0);
  EXPECT_NEAR(f.drag.norm(), 0.5 * 1.225 * 100 * 1e-3 * (k.cd0 + k.k_d * f.cl * f.cl), 1e-15);
  EXPECT_GT(f.drag.dot(flow.airspeed), 0.0);

  const auto still = resolve_flow(Eigen::Vector3d::Zero(), chord, normal);
  const auto f0 = element_force(k, still, chord, normal, 1e-3, 0.1);
  EXPECT_EQ(f0.lift.norm() + f0.drag.norm(), 0.0);
}

TEST(ElementForce, StallClamp) {
  AeroConstants k;
  k.alpha_max = 0.3;
  EXPECT_EQ(effective_alpha(k, 1.4, Eigen::Vector2d::Zero()), 0.3);
  EXPECT_EQ(effective_alpha(k, -1.4, Eigen::Vector2d::Zero()), -0.3);
}

TEST(GeneralizedForce, TranslationDofsCollectElementForces) {
  const auto& t = aerobat();
  std::mt19937_64 rng(13);
  for (int k = 0; k < 20; ++k) {
    const auto s = fuzzed(rng, t);
    const auto out = element_forces(t, s, random_xi(rng, t.n_elements));
    const Eigen::Vector3d total = (out.lift + out.drag).rowwise().sum();
    for (int r = 0; r < 3; ++r) EXPECT_NEAR(out.generalized[r], total[r], 1e-14 * (1 + total.norm()));
  }
}

TEST(GeneralizedForce, VirtualWork) {
  const auto& t = aerobat();
  std::mt19937_64 rng(14);
  for (int k = 0; k < 30; ++k) {
    const auto s = fuzzed(rng, t);
    const auto out = element_forces(t, s, random_xi(rng, t.n_elements));
    const Eigen::VectorXd F = out.stacked();
    // dW/dq_j with the element forces held fixed.
    Eigen::VectorXd fd(out.generalized.size());
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < fd.size(); ++j) {
      auto sp = s, sm = s;
      sp.q[j] += h;
      sm.q[j] -= h;
      const auto pp = multibody::quarter_chord_points(t, sp), pm = multibody::quarter_chord_points(t, sm);
      double w = 0.0;
      for (std::size_t e = 0; e < pp.size(); ++e)
        w += F.segment<3>(3 * static_cast<Eigen::Index>(e)).dot(pp[e] - pm[e]);
      fd[j] = w / (2 * h);
    }
    EXPECT_LT((out.generalized - fd).norm() / fd.norm(), 1e-5) << "state " << k;
  }
}

TEST(GeneralizedForce, DragDissipates) {
  const auto& t = aerobat();
  std::mt19937_64 rng(15);
  for (int k = 0; k < 200; ++k) {
    const auto s = fuzzed(rng, t);
    const auto out = element_forces(t, s, random_xi(rng, t.n_elements));
    EXPECT_LE(s.qdot.dot(out.generalized_drag), 0.0);
  }
}

TEST(GeneralizedForce, MirrorSymmetryCancelsLateralForces) {
  const auto& t = aerobat();
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    auto s = rest(t);
    s.q[0] = u(rng);
    s.q[2] = u(rng);
    s.q[4] = 0.5 * u(rng);
    s.q[6] = s.q[7] = u(rng);
    s.q[8] = s.q[9] = u(rng);
    s.qdot[0] = 3 + u(rng);
    s.qdot[2] = u(rng);
    s.qdot[4] = u(rng);
    s.qdot[6] = s.qdot[7] = 5 * u(rng);
    s.qdot[8] = s.qdot[9] = 5 * u(rng);
    Eigen::VectorXd xi(16);
    for (int e = 0; e < 4; ++e) {
      xi.segment<2>(2 * e) = Eigen::Vector2d(0.1 * u(rng), 0.1 * u(rng));
      xi.segment<2>(2 * (e + 4)) = xi.segment<2>(2 * e);
    }
    const auto out = element_forces(t, s, xi);
    EXPECT_NEAR(out.generalized[1], 0.0, 1e-10);
    EXPECT_NEAR(out.generalized[3], 0.0, 1e-10);
    EXPECT_NEAR(out.generalized[5], 0.0, 1e-10);
    EXPECT_GT(out.generalized.norm(), 0.0);
  }
}
