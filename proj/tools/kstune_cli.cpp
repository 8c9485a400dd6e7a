// kstune: smoothing, auto-tuning, simulation and timing from the shell.
//
//   kstune smooth   --input y.csv --params theta.json --out-dir out/
//   kstune tune     --input y.csv --params theta0.json --config cfg.json --out-dir out/
//   kstune simulate --config sim.json --out-dir out/
//   kstune bench    --out-dir out/
//
// Errors print one line "error: <Kind>: <detail>" on stderr and exit 1.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kstune/kstune.hpp"

namespace fs = std::filesystem;
using kstune::ErrorKind;
using kstune::fail;
using kstune::Index;
using kstune::Matrix;
using json = nlohmann::json;

namespace {

struct Options {
  std::string input;
  std::string params;
  std::string config;
  std::string out_dir = ".";
  bool header = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> mask_frac;
  std::optional<double> test_frac;
  std::optional<int> iters;
  std::optional<double> step0;
  std::optional<double> eps;
  std::vector<Index> split_channels;
  std::vector<Index> T_grid{1000, 2000, 4000, 8000};
  int runs = 10;
  Index bench_n = 10;
  Index bench_p = 10;
  bool verbose = false;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) fail(ErrorKind::ConfigError, std::string("missing --") + what);
  if (!fs::is_regular_file(path)) fail(ErrorKind::ConfigError, std::string(what) + " file not found: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

json load_config(const Options& opt) {
  if (opt.config.empty()) return json::object();
  require_file(opt.config, "config");
  json cfg = read_json_file(opt.config);
  if (!cfg.is_object()) fail(ErrorKind::ConfigError, "config document must be a JSON object");
  return cfg;
}

kstune::MeasurementSet load_measurements(const Options& opt) {
  require_file(opt.input, "input");
  std::ifstream in(opt.input);
  try {
    return kstune::io::read_measurements_csv(in, opt.header);
  } catch (const kstune::Error& e) {
    fail(e.kind(), opt.input + ": " + e.what());
  }
}

kstune::ParameterSet load_params(const std::string& path) {
  require_file(path, "params");
  return kstune::io::params_from_json(read_json_file(path));
}

fs::path prepare_out_dir(const Options& opt) {
  const fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::ConfigError, "cannot create output directory " + opt.out_dir + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::ConfigError, "cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::ConfigError, std::string("config key \"") + key + "\" has the wrong type");
  }
}

template <class T>
T pick(const std::optional<T>& flag, const json& section, const char* key, T fallback) {
  return flag ? *flag : get_or<T>(section, key, fallback);
}

// Scalar s means s * I; otherwise a dense matrix.
Matrix covariance(const json& j, Index dim, const char* name) {
  if (j.is_null()) return Matrix::Identity(dim, dim);
  if (j.is_number()) return j.get<double>() * Matrix::Identity(dim, dim);
  return kstune::io::matrix_from_json(j, name);
}

struct Split {
  kstune::EntrySet masked;
  kstune::EntrySet test;
  kstune::EntrySet constrained;
  double mask_frac = 0.0;
  double test_frac = 0.0;
  std::uint64_t seed = 0;
  std::vector<Index> channels;
};

// Masked and test entries are drawn from the known entries of the selected
// channels (all channels when none are given); everything else known is
// constrained.
Split make_split(const Options& opt, const json& cfg, const kstune::MeasurementSet& meas, double default_mask,
                 double default_test) {
  const json section = cfg.value("split", json::object());
  Split s;
  s.mask_frac = pick(opt.mask_frac, section, "mask_frac", default_mask);
  s.test_frac = pick(opt.test_frac, section, "test_frac", default_test);
  s.seed = pick(opt.seed, cfg, "seed", std::uint64_t{0});
  s.channels = opt.split_channels.empty() ? get_or(section, "channels", std::vector<Index>{}) : opt.split_channels;
  const kstune::EntrySet known = meas.known();
  const kstune::EntrySet pool = s.channels.empty() ? known : known.restrict_channels(s.channels);
  if (s.mask_frac == 0.0 && s.test_frac == 0.0) {
    s.constrained = known;
    return s;
  }
  const kstune::KnownSplit ks = kstune::split_known(pool, s.mask_frac, s.test_frac, s.seed);
  s.masked = ks.masked;
  s.test = ks.test;
  s.constrained = known.minus(s.masked.unite(s.test));
  return s;
}

json split_meta(const Split& s) {
  return json{{"mask_frac", s.mask_frac}, {"test_frac", s.test_frac}, {"seed", s.seed},
              {"channels", s.channels},   {"masked", s.masked.size()}, {"test", s.test.size()},
              {"constrained", s.constrained.size()}};
}

void write_meta(const fs::path& dir, const std::string& command, json details) {
  details["command"] = command;
  details["format"] = "kstune-1";
  write_json(dir / "meta.json", details);
}

int cmd_smooth(const Options& opt) {
  const json cfg = load_config(opt);
  const kstune::MeasurementSet meas = load_measurements(opt);
  const kstune::ParameterSet params = load_params(opt.params);
  kstune::validate_dims(params, meas);
  const Split split = make_split(opt, cfg, meas, 0.0, 0.0);

  const kstune::ForwardPass fp = kstune::forward(params, meas, split.constrained);
  const kstune::KktSystem sys = kstune::build_kkt(fp.prob);
  Eigen::VectorXd u(sys.order());
  u << fp.sol.z, fp.sol.v, fp.sol.eta;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.order());
  rhs.tail(fp.prob.c.size()) = fp.prob.c;
  const double residual = kstune::relative_residual(sys.M, u, rhs);
  const double objective = kstune::objective_value(fp.prob, fp.sol.z);

  const fs::path dir = prepare_out_dir(opt);
  {
    std::ofstream out = open_out(dir / "xhat.csv");
    kstune::io::write_table_csv(out, fp.sol.xhat, "x");
  }
  {
    std::ofstream out = open_out(dir / "yhat.csv");
    kstune::io::write_table_csv(out, fp.sol.yhat, "y");
  }
  json result{{"kkt_residual", residual}, {"objective", objective}, {"regularization", fp.fact.reg()}};
  if (!split.masked.empty()) result["masked_L"] = kstune::prediction_error(fp.sol, meas, split.masked);
  if (!split.test.empty()) result["test_L"] = kstune::prediction_error(fp.sol, meas, split.test);
  write_meta(dir, "smooth",
             json{{"input", opt.input}, {"params", opt.params}, {"header", opt.header}, {"T", meas.T()},
                  {"n", params.n()}, {"p", params.p()}, {"split", split_meta(split)}, {"result", result}});

  std::printf("kkt_residual %s\n", kstune::io::format_double(residual).c_str());
  std::printf("objective %s\n", kstune::io::format_double(objective).c_str());
  return 0;
}

int cmd_tune(const Options& opt) {
  const json cfg = load_config(opt);
  const kstune::MeasurementSet meas = load_measurements(opt);
  const json tune_section = cfg.value("tune", json::object());

  kstune::TuneConfig tc;
  tc.theta0 = load_params(opt.params);
  kstune::validate_dims(tc.theta0, meas);
  tc.reg = kstune::io::regularizer_from_json(cfg.value("regularizer", json()), tc.theta0);
  tc.t0 = pick(opt.step0, tune_section, "t0", tc.t0);
  tc.n_iter = pick(opt.iters, tune_section, "n_iter", tc.n_iter);
  tc.eps = pick(opt.eps, tune_section, "eps", tc.eps);
  tc.seed = pick(opt.seed, cfg, "seed", std::uint64_t{0});
  kstune::validate(tc);

  const Split split = make_split(opt, cfg, meas, 0.2, 0.2);
  const kstune::JudgeResult before = kstune::judge(tc.theta0, meas, split.masked, split.test);

  kstune::ProgressCallback progress;
  if (opt.verbose) {
    progress = [](const kstune::IterationRecord& rec) {
      std::fprintf(stderr, "k=%d F=%.6g step=%.3g %s\n", rec.k, rec.F, rec.step, rec.accepted ? "accept" : "reject");
    };
  }
  const kstune::TuneResult res = kstune::tune(tc, meas, split.masked, split.constrained, progress);
  const kstune::JudgeResult after = kstune::judge(res.theta_final, meas, split.masked, split.test);

  const fs::path dir = prepare_out_dir(opt);
  write_json(dir / "params.json", kstune::io::params_to_json(res.theta_final));
  {
    std::ofstream out = open_out(dir / "history.csv");
    kstune::io::write_history_csv(out, res.history);
  }
  int accepted = 0;
  for (const auto& rec : res.history) accepted += rec.accepted ? 1 : 0;
  const json summary{{"termination", std::string(kstune::to_string(res.termination))},
                     {"iterations", res.history.size()},
                     {"accepted", accepted},
                     {"F_initial", res.history.empty() ? res.F_final : res.history.front().F},
                     {"F_final", res.F_final},
                     {"r_final", res.r_final},
                     {"train_L_initial", before.train_L},
                     {"train_L_final", after.train_L},
                     {"test_L_initial", before.test_L},
                     {"test_L_final", after.test_L}};
  write_json(dir / "summary.json", summary);
  write_meta(dir, "tune",
             json{{"input", opt.input},
                  {"params", opt.params},
                  {"config", opt.config},
                  {"header", opt.header},
                  {"t0", tc.t0},
                  {"n_iter", tc.n_iter},
                  {"eps", tc.eps},
                  {"seed", tc.seed},
                  {"regularizer", cfg.value("regularizer", json())},
                  {"split", split_meta(split)}});

  std::printf("termination %s\n", std::string(kstune::to_string(res.termination)).c_str());
  std::printf("train_L %s -> %s\n", kstune::io::format_double(before.train_L).c_str(),
              kstune::io::format_double(after.train_L).c_str());
  std::printf("test_L %s -> %s\n", kstune::io::format_double(before.test_L).c_str(),
              kstune::io::format_double(after.test_L).c_str());
  return res.termination == kstune::Termination::solver_failure ? 1 : 0;
}

kstune::SystemKind system_kind(const json& sim) {
  const std::string kind = get_or<std::string>(sim, "kind", "random");
  if (kind == "random") {
    return kstune::RandomSystem{get_or<Index>(sim, "n", 2), get_or<Index>(sim, "p", 2),
                                get_or<double>(sim, "spectral_radius", 0.9)};
  }
  if (kind == "double_integrator") return kstune::DoubleIntegrator{get_or<double>(sim, "h", 0.01)};
  if (kind == "migration_like") return kstune::MigrationLike{get_or<Index>(sim, "n", 4)};
  fail(ErrorKind::ConfigError, "unknown system kind '" + kind + "'");
}

kstune::Misspecification misspecification(const json& m) {
  const std::string kind = get_or<std::string>(m, "kind", "");
  if (kind == "scale_W") return kstune::ScaleW{get_or<double>(m, "gamma", 1.0)};
  if (kind == "scale_V") return kstune::ScaleV{get_or<double>(m, "gamma", 1.0)};
  if (kind == "perturb_A") return kstune::PerturbA{get_or<double>(m, "sigma", 0.0), get_or<std::uint64_t>(m, "seed", 0)};
  fail(ErrorKind::ConfigError, "unknown misspecification kind '" + kind + "'");
}

int cmd_simulate(const Options& opt) {
  const json cfg = load_config(opt);
  const json sim_cfg = cfg.value("simulate", cfg);
  kstune::SimSpec spec;
  spec.kind = system_kind(sim_cfg);
  spec.T = get_or<Index>(sim_cfg, "T", spec.T);
  const Index n = kstune::state_dim(spec.kind);
  const Index p = kstune::output_dim(spec.kind);
  spec.W = covariance(sim_cfg.value("W", json()), n, "W");
  spec.V = covariance(sim_cfg.value("V", json()), p, "V");
  spec.seed = pick(opt.seed, sim_cfg, "seed", std::uint64_t{0});
  spec.known_frac = get_or<double>(sim_cfg, "known_frac", 1.0);

  kstune::Simulation sim = kstune::simulate(spec);
  if (sim_cfg.contains("subsample")) {
    const json& sub = sim_cfg["subsample"];
    sim.meas = kstune::subsample_channels(sim.meas, get_or(sub, "channels", std::vector<Index>{}),
                                          get_or<Index>(sub, "period", 1));
  }

  const fs::path dir = prepare_out_dir(opt);
  {
    std::ofstream out = open_out(dir / "measurements.csv");
    kstune::io::write_measurements_csv(out, sim.meas, opt.header);
  }
  {
    std::ofstream out = open_out(dir / "true_states.csv");
    kstune::io::write_table_csv(out, sim.true_states, "x");
  }
  write_json(dir / "true_params.json", kstune::io::params_to_json(sim.true_params));
  if (sim_cfg.contains("misspecify")) {
    kstune::ParameterSet theta0 = sim.true_params;
    for (const json& m : sim_cfg["misspecify"]) theta0 = kstune::misspecify(theta0, misspecification(m));
    write_json(dir / "theta0.json", kstune::io::params_to_json(theta0));
  }
  json spec_meta = sim_cfg;
  spec_meta["seed"] = spec.seed;
  spec_meta["T"] = spec.T;
  spec_meta["known_frac"] = spec.known_frac;
  write_meta(dir, "simulate",
             json{{"config", opt.config}, {"spec", spec_meta}, {"n", n}, {"p", p}, {"header", opt.header},
                  {"known", sim.meas.known().size()}});
  std::printf("T %lld n %lld p %lld known %zu\n", static_cast<long long>(spec.T), static_cast<long long>(n),
              static_cast<long long>(p), sim.meas.known().size());
  return 0;
}

int cmd_bench(const Options& opt) {
  kstune::BenchConfig bc;
  bc.T_grid = opt.T_grid;
  bc.runs = opt.runs;
  bc.n = opt.bench_n;
  bc.p = opt.bench_p;
  bc.seed = opt.seed.value_or(0);
  const std::vector<kstune::BenchRow> rows = kstune::run_benchmark(bc);

  const fs::path dir = prepare_out_dir(opt);
  std::ofstream out = open_out(dir / "bench.csv");
  out << "T,forward_s,backward_s\n";
  std::printf("%8s %14s %14s\n", "T", "forward_s", "backward_s");
  for (const auto& r : rows) {
    out << r.T << ',' << kstune::io::format_double(r.forward_s) << ',' << kstune::io::format_double(r.backward_s)
        << '\n';
    std::printf("%8lld %14.6f %14.6f\n", static_cast<long long>(r.T), r.forward_s, r.backward_s);
  }
  write_meta(dir, "bench",
             json{{"T_grid", bc.T_grid}, {"runs", bc.runs}, {"n", bc.n}, {"p", bc.p}, {"seed", bc.seed}});
  return 0;
}

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config, "JSON config document");
  sub->add_option("--out-dir", opt.out_dir, "Output directory (created if needed)");
  sub->add_option("--seed", opt.seed, "Random seed");
  sub->add_flag("--header", opt.header, "Measurement CSV has (or gets) a header row");
}

void add_split(CLI::App* sub, Options& opt) {
  sub->add_option("--input", opt.input, "Measurement CSV")->required();
  sub->add_option("--params", opt.params, "Parameter JSON")->required();
  sub->add_option("--mask-frac", opt.mask_frac, "Fraction of known entries masked for tuning");
  sub->add_option("--test-frac", opt.test_frac, "Fraction of known entries held out for testing");
  sub->add_option("--split-channels", opt.split_channels, "Draw masked/test entries from these channels only")
      ->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kalman smoothing with missing measurements and parameter auto-tuning"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* smooth = app.add_subcommand("smooth", "Smooth a measurement file with given parameters");
  add_common(smooth, opt);
  add_split(smooth, opt);

  CLI::App* tune = app.add_subcommand("tune", "Tune parameters by proximal gradient on masked prediction error");
  add_common(tune, opt);
  add_split(tune, opt);
  tune->add_option("--iters", opt.iters, "Maximum iterations");
  tune->add_option("--step0", opt.step0, "Initial step size");
  tune->add_option("--eps", opt.eps, "Stopping tolerance");
  tune->add_flag("--verbose", opt.verbose, "Log every iteration to stderr");

  CLI::App* simulate = app.add_subcommand("simulate", "Draw a synthetic measurement set");
  add_common(simulate, opt);

  CLI::App* bench = app.add_subcommand("bench", "Time forward and backward passes over a T grid");
  add_common(bench, opt);
  bench->add_option("--T-grid", opt.T_grid, "Sequence lengths")->delimiter(',');
  bench->add_option("--runs", opt.runs, "Timed runs per T");
  bench->add_option("--n", opt.bench_n, "State dimension");
  bench->add_option("--p", opt.bench_p, "Output dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(kstune::to_string(ErrorKind::ConfigError)).c_str(), e.what());
    return 1;
  }

  try {
    if (*smooth) return cmd_smooth(opt);
    if (*tune) return cmd_tune(opt);
    if (*simulate) return cmd_simulate(opt);
    return cmd_bench(opt);
  } catch (const kstune::Error& e) {
    std::string detail = e.what();
    for (char& c : detail) {
      if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "error: %s: %s\n", std::string(kstune::to_string(e.kind())).c_str(), detail.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(kstune::to_string(ErrorKind::SolverFailure)).c_str(), e.what());
  }
  return 1;
}
