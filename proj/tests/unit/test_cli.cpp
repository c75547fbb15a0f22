#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "morphwing/cli/commands.hpp"
#include "morphwing/io/csv.hpp"
#include "morphwing/multibody/model.hpp"

using namespace morphwing;
using namespace morphwing::cli;
namespace fs = std::filesystem;

namespace {

std::string src(const std::string& rel) { return std::string(MORPHWING_SOURCE_DIR) + "/" + rel; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("morphwing_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  // Shipped config with a few fields replaced; the model path is made absolute.
  fs::path config(const std::string& name, const nlohmann::json& patch) {
    auto doc = nlohmann::json::parse(slurp(src("configs/" + name + ".json")));
    doc["model"] = src("models/" + name + ".mdl");
    doc.merge_patch(patch);
    const auto p = dir / (name + "-patched.json");
    std::ofstream(p) << doc.dump(2);
    return p;
  }

  // Short aerobat run with a narrow net so training takes well under a second.
  fs::path small_train_config(const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json patch = {{"sim", {{"duration", 0.1}}}, {"filter", {{"width", 4}}}};
    patch.merge_patch(extra);
    return config("aerobat-lite", patch);
  }

  std::ostringstream log, err;
};

TEST_F(Cli, SimulateWritesTwoThousandRowsAndTwentySamples) {
  Overrides o;
  o.model = src("models/aerobat-lite.mdl");
  o.duration = 0.2;
  o.dt = 1e-4;
  o.out = dir / "sim";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  EXPECT_EQ(io::read_csv(dir / "sim/trajectory.csv").rows.size(), 2000u);
  EXPECT_EQ(io::read_csv(dir / "sim/samples.csv").rows.size(), 20u);
}

TEST_F(Cli, ZeroDurationGivesHeaderOnlyFiles) {
  Overrides o;
  o.model = src("models/aerobat-lite.mdl");
  o.duration = 0.0;
  o.out = dir / "z";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  for (const char* f : {"trajectory.csv", "samples.csv"}) {
    const auto t = io::read_csv(dir / "z" / f);
    EXPECT_FALSE(t.header.empty()) << f;
    EXPECT_TRUE(t.rows.empty()) << f;
  }
}

TEST_F(Cli, MissingModelIsUsageErrorNamingPath) {
  Overrides o;
  o.model = dir / "nope" / "ghost.mdl";
  o.out = dir / "x";
  EXPECT_EQ(cmd_simulate(o, log, err), kUsage);
  EXPECT_NE(err.str().find("ghost.mdl"), std::string::npos) << err.str();

  std::ostringstream err2;
  Overrides c;
  c.config = dir / "missing.json";
  EXPECT_EQ(cmd_train(c, log, err2), kUsage);
  EXPECT_NE(err2.str().find("missing.json"), std::string::npos) << err2.str();
}

TEST_F(Cli, NoModelAtAllIsUsageError) {
  Overrides o;
  o.out = dir / "x";
  EXPECT_EQ(cmd_validate(o, log, err), kUsage);
}

TEST_F(Cli, FlagsOverrideConfig) {
  const auto cfg = config("planar-flapper", {{"sim", {{"duration", 0.05}}}, {"seed", 9}});
  Overrides o;
  o.config = cfg;
  auto e = resolve(o);
  EXPECT_DOUBLE_EQ(e.sim.duration, 0.05);
  EXPECT_EQ(e.sim.seed, 9u);
  EXPECT_EQ(e.filter.seed, 9u);
  o.duration = 0.02;
  o.seed = 4;
  o.stride = 10;
  e = resolve(o);
  EXPECT_DOUBLE_EQ(e.sim.duration, 0.02);
  EXPECT_EQ(e.sim.seed, 4u);
  EXPECT_EQ(e.filter.seed, 4u);
  EXPECT_EQ(e.sim.sample_stride, 10u);

  o.out = dir / "fo";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  EXPECT_EQ(io::read_csv(dir / "fo/trajectory.csv").rows.size(), 200u);
  EXPECT_EQ(io::read_csv(dir / "fo/samples.csv").rows.size(), 20u);
}

TEST_F(Cli, ConfigRelativePathsResolveAgainstConfigDir) {
  const auto e = load_experiment(src("configs/aerobat-lite.json"));
  EXPECT_TRUE(fs::exists(e.model)) << e.model;
  EXPECT_EQ(fs::weakly_canonical(e.model), fs::weakly_canonical(src("models/aerobat-lite.mdl")));
}

TEST_F(Cli, FilterBlockIsRead) {
  const auto cfg = config("aerobat-lite", {{"filter", {{"q", 0.0}, {"r", 2e-3}, {"p0", 0.5}, {"width", 7},
                                                        {"covariance", "full"}, {"epochs", 3}}}});
  Overrides o;
  o.config = cfg;
  const auto e = resolve(o);
  EXPECT_EQ(e.filter.q, 0.0);
  EXPECT_EQ(e.filter.r, 2e-3);
  EXPECT_EQ(e.filter.p0, 0.5);
  EXPECT_EQ(e.filter.width, 7u);
  EXPECT_EQ(e.filter.epochs, 3u);
  EXPECT_EQ(e.filter.form, ckf::CovarianceForm::Full);
}

TEST_F(Cli, BadCovarianceNameRejected) {
  Overrides o;
  o.config = config("aerobat-lite", {{"filter", {{"covariance", "cholesky-ish"}}}});
  EXPECT_THROW(resolve(o), UsageError);
}

TEST_F(Cli, BenchHasEightRowsAndPendulumBackendsAgree) {
  Overrides o;
  o.model = src("models/pendulum2.mdl");
  o.iterations = 1000;
  o.out = dir / "b";
  ASSERT_EQ(cmd_bench(o, log, err), kOk) << err.str();
  const auto t = io::read_text_csv(dir / "b/bench.csv");
  ASSERT_EQ(t.rows.size(), 8u);
  const auto it = t.column("iterations");
  const auto diff = t.column("max_abs_diff");
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : t.rows) {
    seen.emplace(r[t.column("term")], r[t.column("backend")]);
    EXPECT_GE(std::stod(r[it]), 1000.0);
    EXPECT_LE(std::stod(r[diff]), 1e-15);
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_NE(log.str().find("speedup"), std::string::npos);
}

TEST_F(Cli, ValidatePassesOnShippedModels) {
  for (const char* m : {"pendulum2", "planar-flapper", "aerobat-lite"}) {
    std::ostringstream out, e;
    Overrides o;
    o.model = src(std::string("models/") + m + ".mdl");
    EXPECT_EQ(cmd_validate(o, out, e), kOk) << m << "\n" << out.str() << e.str();
    EXPECT_EQ(out.str().find("FAIL"), std::string::npos) << out.str();
  }
}

TEST_F(Cli, SimulateIsByteDeterministic) {
  Overrides o;
  o.config = config("planar-flapper", {{"sim", {{"duration", 0.05}}}});
  o.out = dir / "a";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  o.out = dir / "b";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  for (const char* f : {"trajectory.csv", "samples.csv"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST_F(Cli, TrainIsByteDeterministicAndSeedMatters) {
  Overrides o;
  o.config = small_train_config();
  for (const char* d : {"a", "b"}) {
    o.out = dir / d;
    ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  }
  for (const char* f : {"train_log.csv", "forces.csv", "weights.ckpt", "weights.ckpt.filter"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  o.seed = 2;
  o.out = dir / "c";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  EXPECT_NE(slurp(dir / "a/weights.ckpt"), slurp(dir / "c/weights.ckpt"));
}

TEST_F(Cli, EmittedCsvsRoundTripByteIdentical) {
  Overrides o;
  o.config = small_train_config();
  o.out = dir / "r";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  Overrides b;
  b.model = src("models/pendulum2.mdl");
  b.iterations = 1000;
  b.out = dir / "r";
  ASSERT_EQ(cmd_bench(b, log, err), kOk) << err.str();
  for (const char* f : {"trajectory.csv", "samples.csv", "train_log.csv", "forces.csv"}) {
    const auto bytes = slurp(dir / "r" / f);
    EXPECT_EQ(io::format_csv(io::parse_csv(bytes)), bytes) << f;
  }
  const auto bench = slurp(dir / "r/bench.csv");
  EXPECT_EQ(io::format_text_csv(io::parse_text_csv(bench)), bench);
}

TEST_F(Cli, ResumeMatchesUnbrokenRun) {
  Overrides o;
  o.config = small_train_config();
  o.out = dir / "full";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();

  o.out = dir / "part";
  o.steps = 4;
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  EXPECT_EQ(io::read_csv(dir / "part/train_log.csv").rows.size(), 4u);

  o.steps.reset();
  o.resume = dir / "part/weights.ckpt";
  o.out = dir / "rest";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  for (const char* f : {"forces.csv", "weights.ckpt", "weights.ckpt.filter"})
    EXPECT_EQ(slurp(dir / "full" / f), slurp(dir / "rest" / f)) << f;

  // The resumed log is the tail of the unbroken one.
  const auto full = io::read_csv(dir / "full/train_log.csv");
  const auto rest = io::read_csv(dir / "rest/train_log.csv");
  ASSERT_EQ(rest.rows.size() + 4, full.rows.size());
  for (std::size_t i = 0; i < rest.rows.size(); ++i) EXPECT_EQ(rest.rows[i], full.rows[i + 4]);
}

TEST_F(Cli, ResumeRejectsForeignCheckpoint) {
  Overrides o;
  o.config = small_train_config();
  o.out = dir / "p";
  o.steps = 2;
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  Overrides w;
  w.config = small_train_config({{"filter", {{"width", 5}}}});
  w.resume = dir / "p/weights.ckpt";
  w.out = dir / "q";
  EXPECT_EQ(cmd_train(w, log, err), kUsage);
  fs::remove(dir / "p/weights.ckpt.filter");
  o.steps.reset();
  o.resume = dir / "p/weights.ckpt";
  EXPECT_EQ(cmd_train(o, log, err), kUsage);
}

TEST_F(Cli, TrainFromSampleFileMatchesInline) {
  Overrides o;
  o.config = small_train_config();
  o.out = dir / "s";
  ASSERT_EQ(cmd_simulate(o, log, err), kOk) << err.str();
  o.out = dir / "inline";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  o.samples = dir / "s/samples.csv";
  o.out = dir / "file";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  EXPECT_EQ(slurp(dir / "inline/weights.ckpt"), slurp(dir / "file/weights.ckpt"));
  EXPECT_EQ(slurp(dir / "inline/forces.csv"), slurp(dir / "file/forces.csv"));
}

TEST_F(Cli, TrainReportsMseAndCovariance) {
  Overrides o;
  o.config = small_train_config();
  o.out = dir / "m";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  EXPECT_NE(log.str().find("normalized MSE"), std::string::npos) << log.str();
  EXPECT_NE(log.str().find("max diag(P)"), std::string::npos) << log.str();
  const auto f = io::read_csv(dir / "m/forces.csv");
  EXPECT_EQ(f.rows.size(), 10u);
  EXPECT_EQ(f.header.size(), 1u + 2 * 10u);
}

TEST_F(Cli, WingForceColumnsMirrorUnderSymmetricFlapping) {
  Overrides o;
  o.config = small_train_config({{"sim", {{"duration", 0.2}}}});
  o.out = dir / "sym";
  ASSERT_EQ(cmd_train(o, log, err), kOk) << err.str();
  const auto names = multibody::load_model(src("models/aerobat-lite.mdl")).dof_names();
  auto col = [&](const std::string& dof) {
    const auto i = std::find(names.begin(), names.end(), dof) - names.begin();
    return "a" + std::to_string(i);
  };
  const auto f = io::read_csv(dir / "sym/forces.csv");
  ASSERT_EQ(f.rows.size(), 20u);
  for (const auto& [l, r] : {std::pair{"l_flap", "r_flap"}, std::pair{"l_fold", "r_fold"}}) {
    const auto cl = f.column(col(l)), cr = f.column(col(r));
    double scale = 0.0;
    for (const auto& row : f.rows) scale = std::max(scale, std::abs(row[cl]));
    ASSERT_GT(scale, 1e-6) << l;
    for (const auto& row : f.rows) EXPECT_NEAR(row[cl], row[cr], 1e-9) << l << " t=" << row[0];
  }
}

TEST_F(Cli, FilterDivergenceExitsThreeWithStep) {
  Overrides o;
  // Sigma points of size ~1e150 overflow the network, so P' is not finite.
  o.config = small_train_config({{"filter", {{"p0", 1e300}}}});
  o.out = dir / "d";
  EXPECT_EQ(cmd_train(o, log, err), kDivergence);
  EXPECT_NE(err.str().find("diverged at step "), std::string::npos) << err.str();
}

TEST_F(Cli, SimulationDivergenceExitsThree) {
  Overrides o;
  o.config = config("aerobat-lite", {{"sim", {{"duration", 0.05}, {"gains", {{"kp", 5e3}, {"kd", 5.0}}}}}});
  o.out = dir / "d";
  EXPECT_EQ(cmd_simulate(o, log, err), kDivergence) << err.str();
}

}  // namespace
