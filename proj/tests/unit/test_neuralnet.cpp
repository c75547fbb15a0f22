#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "morphwing/nn/mlp.hpp"

using namespace morphwing::nn;

namespace {

Eigen::VectorXd random_vec(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

MlpSpec random_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> width(1, 9), depth(1, 4);
  std::vector<std::size_t> sizes{width(rng)};
  const std::size_t d = depth(rng);
  for (std::size_t i = 0; i < d; ++i) sizes.push_back(width(rng));
  auto spec = MlpSpec::feedforward(sizes, rng() % 4 != 0);
  return spec;
}

// Plain loop evaluation from unflattened layers.
Eigen::VectorXd reference_forward(const MlpSpec& spec, const std::vector<Layer>& layers, Eigen::VectorXd x) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd y(layers[l].W.rows());
    for (Eigen::Index r = 0; r < y.size(); ++r) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < x.size(); ++c) acc += layers[l].W(r, c) * x[c];
      if (spec.bias) acc += layers[l].b[r];
      y[r] = spec.activations[l] == Activation::Softplus ? std::log1p(std::exp(acc)) : acc;
    }
    x = y;
  }
  return x;
}

}  // namespace

TEST(Softplus, HandValues) {
  EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-30);
}

TEST(Softplus, LargeArgumentAgainstLongDouble) {
  for (double s : {30.5, 35.0, 80.0, 700.0, 1000.0}) {
    const double v = softplus(s);
    ASSERT_TRUE(std::isfinite(v)) << s;
    const long double oracle = static_cast<long double>(s) + std::log1p(std::exp(-static_cast<long double>(s)));
    EXPECT_LE(std::abs(static_cast<long double>(v) - oracle), 1e-12L * oracle) << s;
  }
  EXPECT_LT(softplus(35.0) - 35.0, 1e-12);
  EXPECT_GE(softplus(35.0) - 35.0, 0.0);
}

TEST(Softplus, MonotoneAndOneLipschitz) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  for (int i = 0; i < 20000; ++i) {
    double s = u(rng), t = u(rng);
    if (i % 3 == 0) t = s + 1e-3 * std::abs(u(rng));  // close pairs straddle the branch too
    if (s > t) std::swap(s, t);
    const double d = softplus(t) - softplus(s);
    EXPECT_GE(d, 0.0) << s << " " << t;
    EXPECT_LE(d, (t - s) * (1.0 + 1e-12) + 1e-15) << s << " " << t;
  }
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  const auto spec = MlpSpec::feedforward({4, 5, 5, 3});
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.n_weights()));
  const Eigen::VectorXd y = forward(spec, w, Eigen::VectorXd::LinSpaced(4, -1.0, 2.0));
  EXPECT_EQ(y, Eigen::VectorXd::Zero(3));
}

TEST(Mlp, OneOneOneByHand) {
  const auto spec = MlpSpec::feedforward({1, 1, 1});
  ASSERT_EQ(spec.n_weights(), 4u);
  // W1, b1, W2, b2
  const Eigen::Vector4d w(1.0, 0.0, 1.0, 0.0);
  const Eigen::VectorXd y = forward(spec, w, Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(y[0], 0.693147, 1e-6);
  EXPECT_DOUBLE_EQ(y[0], std::log(2.0));
}

TEST(Mlp, WeightCounts) {
  EXPECT_EQ(MlpSpec::feedforward({12, 16, 16, 10}).n_weights(), 13u * 16 + 17 * 16 + 17 * 10);
  EXPECT_EQ(MlpSpec::feedforward({12, 16, 16, 10}).n_weights(), 650u);
  const auto dyn = MlpSpec::for_dynamics(10);
  EXPECT_EQ(dyn.layer_sizes, (std::vector<std::size_t>{20, 16, 16, 10}));
  EXPECT_EQ(dyn.n_weights(), 778u);
  EXPECT_EQ(dyn.n_layers(), 3u);
  EXPECT_EQ(dyn.activations[0], Activation::Softplus);
  EXPECT_EQ(dyn.activations[1], Activation::Softplus);
  EXPECT_EQ(dyn.activations[2], Activation::Identity);
  EXPECT_EQ(MlpSpec::feedforward({12, 16, 16, 10}, false).n_weights(), 12u * 16 + 16 * 16 + 16 * 10);
}

TEST(Mlp, LayoutOffsetsCoverVector) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = random_spec(rng);
    const auto offs = layout(spec);
    ASSERT_EQ(offs.size(), spec.n_layers());
    std::size_t pos = 0;
    for (std::size_t l = 0; l < offs.size(); ++l) {
      EXPECT_EQ(offs[l].weights, pos);
      EXPECT_EQ(offs[l].bias, pos + spec.layer_sizes[l] * spec.layer_sizes[l + 1]);
      pos = offs[l].end;
    }
    EXPECT_EQ(pos, spec.n_weights());
  }
}

TEST(Mlp, FlattenRoundTripIsBitwise) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = random_spec(rng);
    const Eigen::VectorXd w = random_vec(rng, spec.n_weights(), 1.0);
    const auto layers = unflatten(spec, w);
    const Eigen::VectorXd back = flatten(spec, layers);
    ASSERT_EQ(back.size(), w.size());
    EXPECT_EQ(std::memcmp(back.data(), w.data(), sizeof(double) * static_cast<std::size_t>(w.size())), 0);
    const auto again = unflatten(spec, back);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      EXPECT_EQ(again[l].W, layers[l].W);
      EXPECT_EQ(again[l].b, layers[l].b);
    }
  }
}

TEST(Mlp, RowMajorLayerMajorOrder) {
  const auto spec = MlpSpec::feedforward({2, 3, 1});
  Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(spec.n_weights()), 0.0, 12.0);
  const auto layers = unflatten(spec, w);
  EXPECT_EQ(layers[0].W(0, 1), 1.0);
  EXPECT_EQ(layers[0].W(1, 0), 2.0);
  EXPECT_EQ(layers[0].b[0], 6.0);
  EXPECT_EQ(layers[1].W(0, 2), 11.0);
  EXPECT_EQ(layers[1].b[0], 12.0);
}

TEST(Mlp, ForwardMatchesLoopReference) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = random_spec(rng);
    const Eigen::VectorXd w = random_vec(rng, spec.n_weights(), 0.7);
    const Eigen::VectorXd x = random_vec(rng, spec.n_inputs(), 1.0);
    const Eigen::VectorXd y = forward(spec, w, x);
    const Eigen::VectorXd ref = reference_forward(spec, unflatten(spec, w), x);
    EXPECT_LT((y - ref).lpNorm<Eigen::Infinity>(), 1e-12 * (1.0 + ref.lpNorm<Eigen::Infinity>()));
  }
}

TEST(Mlp, DimensionErrors) {
  const auto spec = MlpSpec::feedforward({3, 4, 2});
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.n_weights()));
  EXPECT_THROW(forward(spec, w, Eigen::VectorXd::Zero(2)), NnError);
  EXPECT_THROW(forward(spec, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)), NnError);
  EXPECT_THROW(unflatten(spec, Eigen::VectorXd::Zero(5)), NnError);
  MlpSpec bad = spec;
  bad.activations.back() = Activation::Softplus;
  EXPECT_THROW(validate(bad), NnError);
  EXPECT_THROW(validate(MlpSpec::feedforward({3})), NnError);
}

TEST(Mlp, ContinuousInWeights) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = random_spec(rng);
    const Eigen::VectorXd w = random_vec(rng, spec.n_weights(), 1.0);
    const Eigen::VectorXd x = random_vec(rng, spec.n_inputs(), 3.0);
    const Eigen::VectorXd y = forward(spec, w, x);
    ASSERT_TRUE(y.allFinite());
    double L = 0.0;
    for (double eps : {1e-2, 1e-4, 1e-6}) {
      const Eigen::VectorXd d = random_vec(rng, spec.n_weights(), eps);
      const Eigen::VectorXd y2 = forward(spec, w + d, x);
      ASSERT_TRUE(y2.allFinite());
      L = std::max(L, (y2 - y).norm() / d.norm());
    }
    EXPECT_TRUE(std::isfinite(L));
    EXPECT_LT(L, 1e6);
  }
}

TEST(Standardizer, FitApplyInvert) {
  Eigen::MatrixXd X(2, 4);
  X << 1.0, 2.0, 3.0, 4.0,
       5.0, 5.0, 5.0, 5.0;
  const auto s = Standardizer::fit(X);
  EXPECT_DOUBLE_EQ(s.center[0], 2.5);
  EXPECT_DOUBLE_EQ(s.scale[0], std::sqrt(5.0 / 3.0));
  EXPECT_EQ(s.scale[1], 1e-12);  // constant feature: floor
  EXPECT_EQ(s.apply(Eigen::Vector2d(2.5, 5.0))[1], 0.0);
  const Eigen::Vector2d x(7.0, -1.0);
  EXPECT_LT((s.invert(s.apply(x)) - x).norm(), 1e-14);
}

TEST(Checkpoint, RoundTrip) {
  std::mt19937_64 rng(17);
  Checkpoint c;
  c.spec = MlpSpec::feedforward({4, 6, 3});
  c.weights = random_vec(rng, c.spec.n_weights(), 1.0);
  c.input = {random_vec(rng, 4, 1.0), random_vec(rng, 4, 1.0)};
  c.output = {random_vec(rng, 3, 1.0), random_vec(rng, 3, 1.0)};
  c.step = 42;
  const auto file = std::filesystem::temp_directory_path() / "morphwing_ckpt_test.txt";
  write_checkpoint(file, c);
  const auto back = read_checkpoint(file);
  std::filesystem::remove(file);
  EXPECT_EQ(back.spec.layer_sizes, c.spec.layer_sizes);
  EXPECT_EQ(back.spec.activations, c.spec.activations);
  EXPECT_EQ(back.spec.bias, c.spec.bias);
  EXPECT_EQ(back.weights, c.weights);
  EXPECT_EQ(back.input.center, c.input.center);
  EXPECT_EQ(back.output.scale, c.output.scale);
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(format_checkpoint(back), format_checkpoint(c));
}

TEST(Checkpoint, RejectsBadFiles) {
  EXPECT_THROW(parse_checkpoint("morphwing-weights 2\n"), NnError);
  EXPECT_THROW(parse_checkpoint("morphwing-weights 1\nlayers 1 1\nactivations identity\nbias 1\nn_w 3\n0\n0\n0\n"),
               NnError);
  EXPECT_THROW(parse_checkpoint("morphwing-weights 1\nlayers 1 1\nactivations identity\nbias 1\nn_w 2\n0\n"),
               NnError);
  EXPECT_THROW(parse_checkpoint("morphwing-weights 1\nlayers 1 1\nactivations identity\nbias 1\nn_w 2\n0\nx\n"),
               NnError);
  EXPECT_NO_THROW(parse_checkpoint("morphwing-weights 1\nlayers 1 1\nactivations identity\nbias 1\nn_w 2\n0\n1\n"));
}
