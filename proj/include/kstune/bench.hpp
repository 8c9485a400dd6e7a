#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "kstune/datagen.hpp"
#include "kstune/grad.hpp"

namespace kstune {

struct BenchConfig {
  std::vector<Index> T_grid{1000, 2000, 4000, 8000};
  int runs = 10;
  Index n = 10;
  Index p = 10;
  double mask_frac = 0.2;
  std::uint64_t seed = 0;
};

struct BenchRow {
  Index T = 0;
  double forward_s = 0.0;   // assemble + KKT build + factorize + solve
  double backward_s = 0.0;  // seed + adjoint backsolve + dL/dD + parameter gradients
};

inline void validate(const BenchConfig& cfg) {
  if (cfg.T_grid.empty()) fail(ErrorKind::ConfigError, "T grid is empty");
  for (Index T : cfg.T_grid) {
    if (T < 2) fail(ErrorKind::ConfigError, "every T in the grid must be at least 2");
  }
  if (cfg.runs < 1) fail(ErrorKind::ConfigError, "runs must be at least 1");
  if (cfg.n < 1 || cfg.p < 1) fail(ErrorKind::ConfigError, "n and p must be positive");
  if (!(cfg.mask_frac > 0.0 && cfg.mask_frac < 1.0)) fail(ErrorKind::ConfigError, "mask_frac must lie in (0, 1)");
}

/// Mean wall time per T over cfg.runs timed repetitions. Each T gets one
/// untimed warm-up repetition first.
inline std::vector<BenchRow> run_benchmark(const BenchConfig& cfg) {
  validate(cfg);
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  for (Index T : cfg.T_grid) {
    SimSpec spec;
    spec.kind = RandomSystem{cfg.n, cfg.p, 0.9};
    spec.T = T;
    spec.W = Matrix::Identity(cfg.n, cfg.n);
    spec.V = Matrix::Identity(cfg.p, cfg.p);
    spec.seed = cfg.seed + static_cast<std::uint64_t>(T);
    const Simulation sim = simulate(spec);
    const KnownSplit split = split_known(sim.meas.known(), cfg.mask_frac, 0.0, spec.seed);
    const EntrySet& constrained = split.train;

    double fwd = 0.0;
    double bwd = 0.0;
    for (int r = 0; r <= cfg.runs; ++r) {
      const auto t0 = clock::now();
      const ForwardPass fp = forward(sim.true_params, sim.meas, constrained);
      const auto t1 = clock::now();
      const GradientResult gr = gradient(sim.true_params, sim.meas, split.masked, fp);
      const auto t2 = clock::now();
      if (!std::isfinite(gr.L)) fail(ErrorKind::SolverFailure, "non-finite prediction error");
      if (r == 0) continue;
      fwd += std::chrono::duration<double>(t1 - t0).count();
      bwd += std::chrono::duration<double>(t2 - t1).count();
    }
    rows.push_back({T, fwd / cfg.runs, bwd / cfg.runs});
  }
  return rows;
}

}  // namespace kstune
