#include "morphwing/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#ifdef __linux__
#include <sched.h>
#endif

#include "json.hpp"
#include "morphwing/expr/dual.hpp"
#include "morphwing/io/csv.hpp"

namespace morphwing::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig parse_experiment(const std::string& text, const fs::path& base_dir) {
  ExperimentConfig c;
  c.sim = sim::parse_sim_config(text);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("sim")) return c;
  auto resolve_path = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    if (doc.contains("model")) c.model = resolve_path(doc.at("model").get<std::string>());
    if (doc.contains("out")) c.out = resolve_path(doc.at("out").get<std::string>());
    if (doc.contains("seed")) {
      c.sim.seed = doc.at("seed").get<std::uint64_t>();
      c.filter.seed = c.sim.seed;
    }
    if (doc.contains("filter")) {
      const json& f = doc.at("filter");
      auto& fc = c.filter;
      fc.q = f.value("q", fc.q);
      fc.r = f.value("r", fc.r);
      fc.p0 = f.value("p0", fc.p0);
      fc.init_std = f.value("init_std", fc.init_std);
      fc.width = f.value("width", fc.width);
      fc.warmup = f.value("warmup", fc.warmup);
      fc.standardize_inputs = f.value("standardize_inputs", fc.standardize_inputs);
      fc.standardize_outputs = f.value("standardize_outputs", fc.standardize_outputs);
      fc.epochs = f.value("epochs", fc.epochs);
      const std::string form = f.value("covariance", "square_root");
      if (form == "square_root") fc.form = ckf::CovarianceForm::SquareRoot;
      else if (form == "full") fc.form = ckf::CovarianceForm::Full;
      else throw UsageError("filter.covariance must be 'square_root' or 'full'");
      if (!(fc.p0 > 0.0) || fc.q < 0.0 || !(fc.r >= 0.0) || fc.width == 0 || fc.epochs == 0)
        throw UsageError("filter block has out-of-range values");
    }
    if (doc.contains("bench")) c.bench_iterations = doc.at("bench").value("iterations", c.bench_iterations);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), path.parent_path());
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config ? load_experiment(*o.config) : ExperimentConfig{};
  if (o.model) c.model = *o.model;
  if (o.out) c.out = *o.out;
  if (o.seed) c.sim.seed = c.filter.seed = *o.seed;
  if (o.duration) c.sim.duration = *o.duration;
  if (o.dt) c.sim.dt = *o.dt;
  if (o.stride) c.sim.sample_stride = *o.stride;
  if (o.iterations) c.bench_iterations = *o.iterations;
  if (c.model.empty()) throw UsageError("no model given (use --model or a config with \"model\")");
  if (!fs::exists(c.model)) throw UsageError("model file not found: " + c.model.string());
  return c;
}

namespace {

multibody::DynamicsTerms derive(const ExperimentConfig& c, std::ostream& log) {
  auto terms = multibody::derive_dynamics(multibody::load_model(c.model));
  char buf[160];
  std::snprintf(buf, sizeof buf, "model %s: %zu DOF, %zu actuated, %zu blade elements, derived in %.2f s\n",
                c.model.filename().string().c_str(), terms.n_q, terms.n_a, terms.n_elements, terms.stats.seconds);
  log << buf;
  return terms;
}

// Maps the library's exception types onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const sim::DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const multibody::SingularityError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const ckf::FilterDivergence& e) {
    err << "error: filter diverged at step " << e.step() << ": " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct SampleSet {
  std::vector<ckf::TrainSample> samples;
  std::vector<double> times;
};

SampleSet read_samples(const fs::path& path, std::size_t n_q) {
  if (!fs::exists(path)) throw UsageError("sample file not found: " + path.string());
  const auto table = io::read_csv(path);
  if (table.header.size() != 1 + 3 * n_q)
    throw UsageError(path.string() + " has " + std::to_string(table.header.size()) + " columns, model needs " +
                     std::to_string(1 + 3 * n_q));
  SampleSet s;
  const auto n = static_cast<Eigen::Index>(n_q);
  for (const auto& row : table.rows) {
    s.times.push_back(row[0]);
    ckf::TrainSample ts{Eigen::VectorXd(2 * n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < 2 * n; ++i) ts.x[i] = row[static_cast<std::size_t>(1 + i)];
    for (Eigen::Index i = 0; i < n; ++i) ts.a[i] = row[static_cast<std::size_t>(1 + 2 * n + i)];
    s.samples.push_back(std::move(ts));
  }
  return s;
}

SampleSet from_experiment(const sim::ExperimentResult& r) {
  SampleSet s;
  for (const auto& x : r.samples) {
    s.samples.push_back({x.x, x.a});
    s.times.push_back(x.t);
  }
  return s;
}

}  // namespace

int cmd_simulate(const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve(o);
    const auto terms = derive(cfg, log);
    const auto r = sim::run_experiment(terms, cfg.sim);
    ensure_dir(cfg.out);
    io::write_csv(cfg.out / "trajectory.csv", {sim::trajectory_header(terms), sim::trajectory_rows(r)});
    io::write_csv(cfg.out / "samples.csv", {sim::sample_header(terms), sim::sample_rows(r)});
    log << "wrote " << r.trajectory.size() << " trajectory rows and " << r.samples.size() << " samples to "
        << cfg.out.string() << "\n";
    log << "tracking RMS " << fmt("%.6g", r.tracking_rms) << " rad\n";
    return int(kOk);
  });
}

int cmd_train(const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve(o);
    const auto terms = derive(cfg, log);
    SampleSet data;
    if (o.samples) {
      data = read_samples(*o.samples, terms.n_q);
    } else {
      data = from_experiment(sim::run_experiment(terms, cfg.sim));
    }
    if (data.samples.empty()) throw UsageError("no training samples");
    const auto spec = nn::MlpSpec::for_dynamics(terms.n_q, cfg.filter.width);
    auto tr = ckf::make_trainer(spec, cfg.filter, data.samples);
    if (o.resume) {
      const auto ckpt = nn::read_checkpoint(*o.resume);
      if (ckpt.spec.layer_sizes != spec.layer_sizes || ckpt.spec.activations != spec.activations ||
          ckpt.spec.bias != spec.bias)
        throw UsageError("checkpoint " + o.resume->string() + " was written for a different network");
      auto filter_path = *o.resume;
      filter_path += ".filter";
      tr.state = ckf::read_filter_state(filter_path);
      if (tr.state.k != ckpt.step || tr.state.w != ckpt.weights)
        throw UsageError(filter_path.string() + " does not belong to " + o.resume->string());
      tr.input = ckpt.input;
      tr.output = ckpt.output;
      log << "resuming at step " << tr.state.k << "\n";
    }
    log << "training " << spec.n_weights() << " weights on " << data.samples.size() << " samples ("
        << tr.rule.size() << " cubature points per update)\n";
    ckf::train_online(tr, data.samples, data.times, o.steps.value_or(0));

    ensure_dir(cfg.out);
    io::CsvTable trace{{"step", "t", "prior_nmse", "fit_nmse", "cov_diag_max", "cov_trace"}, {}};
    for (const auto& l : tr.log)
      trace.rows.push_back({static_cast<double>(l.step), l.t, l.prior_nmse, l.fit_nmse, l.cov_diag_max, l.cov_trace});
    io::write_csv(cfg.out / "train_log.csv", trace);

    io::CsvTable forces{{"t"}, {}};
    for (std::size_t i = 0; i < terms.n_q; ++i) forces.header.push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < terms.n_q; ++i) forces.header.push_back("ahat" + std::to_string(i));
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      std::vector<double> row{data.times[i]};
      const auto& a = data.samples[i].a;
      const Eigen::VectorXd ahat = ckf::predict_force(tr, data.samples[i].x);
      row.insert(row.end(), a.begin(), a.end());
      row.insert(row.end(), ahat.begin(), ahat.end());
      forces.rows.push_back(std::move(row));
    }
    io::write_csv(cfg.out / "forces.csv", forces);

    nn::Checkpoint ckpt{spec, tr.state.w, tr.input, tr.output, tr.state.k};
    nn::write_checkpoint(cfg.out / "weights.ckpt", ckpt);
    ckf::write_filter_state(cfg.out / "weights.ckpt.filter", tr.state);

    const double nmse = ckf::normalized_mse(tr, data.samples, data.samples.size());
    const double pmax = tr.state.S.rowwise().squaredNorm().maxCoeff();
    log << "step " << tr.state.k << ": normalized MSE " << fmt("%.6g", nmse) << " (" << fmt("%.4g", 100 * nmse)
        << "%), max diag(P) " << fmt("%.6g", pmax) << "\n";
    return int(kOk);
  });
}

BenchReport run_bench(const multibody::MultibodyModel& model, std::size_t iterations, std::uint64_t seed) {
#ifdef __linux__
  {
    cpu_set_t set;
    CPU_ZERO(&set);
    const int cpu = sched_getcpu();
    CPU_SET(cpu < 0 ? 0 : cpu, &set);
    sched_setaffinity(0, sizeof set, &set);
  }
#endif
  const auto terms = multibody::derive_dynamics(model);
  const auto sd = multibody::derive_symbolic(model);
  const auto n = static_cast<Eigen::Index>(terms.n_q);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> states(64, std::vector<double>(static_cast<std::size_t>(2 * n)));
  for (auto& x : states)
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i < static_cast<std::size_t>(n) ? 0.8 : 3.0) * u(rng);

  struct Term {
    const char* name;
    const std::vector<expr::NodeId>* raw;
    const expr::CompiledTape* tape;
  };
  const Term list[] = {{"D", &sd.mass, &terms.mass},
                       {"C", &sd.coriolis, &terms.coriolis},
                       {"G", &sd.gravity, &terms.gravity},
                       {"Pjac", &sd.jacobian, &terms.jacobian}};

  using clock = std::chrono::steady_clock;
  auto stats = [](std::vector<double>& us) {
    std::sort(us.begin(), us.end());
    const auto at = [&](double q) { return us[std::min(us.size() - 1, static_cast<std::size_t>(q * us.size()))]; };
    return std::pair{at(0.5), at(0.95)};
  };

  BenchReport rep;
  iterations = std::max<std::size_t>(iterations, 1);
  for (const auto& term : list) {
    expr::NaiveEvaluator naive(sd.graph, *term.raw);
    std::vector<double> ws(term.tape->n_slots()), a(term.raw->size()), b(term.raw->size());
    double diff = 0.0;
    for (const auto& x : states) {
      naive.evaluate(x, a);
      term.tape->evaluate(x, ws, b);
      for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    std::vector<double> t_naive(iterations), t_tape(iterations);
    for (std::size_t k = 0; k < 50; ++k) naive.evaluate(states[k % states.size()], a);  // warm-up
    for (std::size_t k = 0; k < iterations; ++k) {
      const auto& x = states[k % states.size()];
      const auto t0 = clock::now();
      naive.evaluate(x, a);
      const auto t1 = clock::now();
      t_naive[k] = std::chrono::duration<double, std::micro>(t1 - t0).count();
    }
    for (std::size_t k = 0; k < 50; ++k) term.tape->evaluate(states[k % states.size()], ws, b);
    for (std::size_t k = 0; k < iterations; ++k) {
      const auto& x = states[k % states.size()];
      const auto t0 = clock::now();
      term.tape->evaluate(x, ws, b);
      const auto t1 = clock::now();
      t_tape[k] = std::chrono::duration<double, std::micro>(t1 - t0).count();
    }
    const auto [nm, np] = stats(t_naive);
    const auto [tm, tp] = stats(t_tape);
    rep.rows.push_back({term.name, "naive", iterations, nm, np, diff});
    rep.rows.push_back({term.name, "tape", iterations, tm, tp, diff});
    rep.speedup.emplace_back(term.name, nm / tm);
  }
  return rep;
}

int cmd_bench(const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve(o);
    const auto model = multibody::load_model(cfg.model);
    const auto rep = run_bench(model, cfg.bench_iterations, cfg.sim.seed);

    ensure_dir(cfg.out);
    io::TextTable csv{{"term", "backend", "iterations", "median_us", "p95_us", "speedup", "max_abs_diff"}, {}};
    char buf[200];
    log << "term  backend  iters    median_us     p95_us   speedup  max|diff|\n";
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      const auto& r = rep.rows[i];
      const double sp = r.backend == "tape" ? rep.speedup[i / 2].second : 1.0;
      csv.rows.push_back({r.term, r.backend, std::to_string(r.iterations), fmt("%.6g", r.median_us),
                          fmt("%.6g", r.p95_us), fmt("%.6g", sp), fmt("%.3g", r.max_abs_diff)});
      std::snprintf(buf, sizeof buf, "%-5s %-7s %6zu %12.3f %10.3f %9.2f  %.2e\n", r.term.c_str(), r.backend.c_str(),
                    r.iterations, r.median_us, r.p95_us, sp, r.max_abs_diff);
      log << buf;
    }
    io::write_text_csv(cfg.out / "bench.csv", csv);
    return int(kOk);
  });
}

std::vector<CheckResult> run_model_checks(const multibody::DynamicsTerms& terms, std::size_t n_states,
                                          std::uint64_t seed) {
  const auto sd = multibody::derive_symbolic(terms.model);
  const auto n = static_cast<Eigen::Index>(terms.n_q);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  CheckResult sym{"D symmetric", true, 0.0, 1e-12}, spd{"D positive definite (min eigenvalue)", true, 1e300, 0.0},
      skew{"qdot^T (Ddot - 2C) qdot", true, 0.0, 1e-9}, jac{"dP/dq vs central differences (rel)", true, 0.0, 1e-6},
      kin{"T = qdot^T D qdot / 2 (rel)", true, 0.0, 1e-12};

  for (std::size_t k = 0; k < n_states; ++k) {
    multibody::VehicleState s{Eigen::VectorXd(n), Eigen::VectorXd(n), 0.0};
    for (Eigen::Index i = 0; i < n; ++i) {
      s.q[i] = 0.8 * u(rng);
      s.qdot[i] = 3.0 * u(rng);
    }
    const auto tv = multibody::eval_terms(terms, s);
    std::vector<double> x(static_cast<std::size_t>(2 * n)), seedv(static_cast<std::size_t>(2 * n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = s.q[i];
      x[static_cast<std::size_t>(n + i)] = s.qdot[i];
      seedv[static_cast<std::size_t>(i)] = s.qdot[i];
    }
    const auto Dm = terms.mass.evaluate(x);
    Eigen::MatrixXd D(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) D(i, j) = Dm[static_cast<std::size_t>(i * n + j)];
    sym.value = std::max(sym.value, (D - D.transpose()).cwiseAbs().maxCoeff() / D.cwiseAbs().maxCoeff());
    spd.value = std::min(spd.value, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(tv.D).eigenvalues().minCoeff());

    const auto dual = expr::eval_dual(sd.graph, sd.mass, x, seedv);
    Eigen::MatrixXd Ddot(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) Ddot(i, j) = dual.derivatives[static_cast<std::size_t>(i * n + j)];
    skew.value = std::max(skew.value, std::abs(s.qdot.dot((Ddot - 2.0 * tv.C) * s.qdot)));

    const auto [T, V] = multibody::energy(terms, s);
    (void)V;
    const double Tq = 0.5 * s.qdot.dot(tv.D * s.qdot);
    kin.value = std::max(kin.value, std::abs(T - Tq) / std::max(std::abs(Tq), 1e-300));

    if (terms.n_elements > 0) {
      const auto wk = multibody::wing_kinematics(terms, s);
      const double h = 1e-6;
      for (Eigen::Index j = 0; j < n; ++j) {
        auto sp = s, sm = s;
        sp.q[j] += h;
        sm.q[j] -= h;
        const Eigen::MatrixXd Pp = multibody::wing_kinematics(terms, sp).points;
        const Eigen::MatrixXd Pm = multibody::wing_kinematics(terms, sm).points;
        const Eigen::VectorXd fd = (Pp - Pm).reshaped() / (2 * h);
        const Eigen::VectorXd an = wk.jacobian.col(j);
        jac.value = std::max(jac.value, (fd - an).lpNorm<Eigen::Infinity>() / std::max(1.0, an.lpNorm<Eigen::Infinity>()));
      }
    }
  }
  sym.pass = sym.value <= sym.bound;
  spd.pass = spd.value > spd.bound;
  skew.pass = skew.value < skew.bound;
  jac.pass = jac.value < jac.bound;
  kin.pass = kin.value < kin.bound;
  std::vector<CheckResult> out{sym, spd, skew, kin};
  if (terms.n_elements > 0) out.push_back(jac);
  return out;
}

int cmd_validate(const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve(o);
    const auto terms = derive(cfg, log);
    const auto checks = run_model_checks(terms, 100, cfg.sim.seed);
    bool ok = true;
    char buf[200];
    for (const auto& c : checks) {
      std::snprintf(buf, sizeof buf, "%s  %-40s worst %.3e  bound %.1e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.value, c.bound);
      log << buf;
      ok = ok && c.pass;
    }
    return int(ok ? kOk : kDivergence);
  });
}

}  // namespace morphwing::cli
