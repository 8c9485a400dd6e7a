#pragma once

#include "kstune/autotune.hpp"
#include "kstune/datagen.hpp"

namespace kstune::testing {

struct EfficacyRun {
  double masked_L0 = 0.0;
  double masked_L1 = 0.0;
  double test_L0 = 0.0;
  double test_L1 = 0.0;
  Regularizer reg;
  TuneResult result;
};

/// Double integrator with W = V = 1e-2 I, tuned from W^-1/2 scaled by 10
/// (W / 100). Masked and test entries are 20% / 20% of the position
/// entries. Only the covariance factors are tuned, symmetric, with the
/// off-diagonal penalty alpha = 1e-4.
inline EfficacyRun misspecified_double_integrator(std::uint64_t seed, Index T, int n_iter = 25) {
  SimSpec spec;
  spec.kind = DoubleIntegrator{0.01};
  spec.T = T;
  spec.W = 1e-2 * Matrix::Identity(9, 9);
  spec.V = 1e-2 * Matrix::Identity(8, 8);
  spec.seed = seed;
  const Simulation sim = simulate(spec);
  const EntrySet known = sim.meas.known();
  const KnownSplit split = split_known(known.restrict_channels({0, 1, 2}), 0.2, 0.2, seed + 1000);
  const EntrySet constrained = known.minus(split.masked.unite(split.test));

  TuneConfig cfg;
  cfg.theta0 = misspecify(sim.true_params, ScaleW{100.0});
  cfg.reg.penalties = {{Target::Wisqrt, OffdiagQuad{1e-4}}, {Target::Visqrt, OffdiagQuad{1e-4}}};
  cfg.reg.constraints = {{Target::A, Fixed{cfg.theta0.A}},
                         {Target::C, Fixed{cfg.theta0.C}},
                         {Target::Wisqrt, Symmetric{}},
                         {Target::Visqrt, Symmetric{}}};
  cfg.t0 = 1e-2;
  cfg.n_iter = n_iter;
  cfg.seed = seed;

  EfficacyRun run;
  run.reg = cfg.reg;
  run.result = tune(cfg, sim.meas, split.masked, constrained);
  auto loss = [&](const ParameterSet& P, const EntrySet& on) {
    return prediction_error(smooth(P, sim.meas, constrained), sim.meas, on);
  };
  run.masked_L0 = loss(cfg.theta0, split.masked);
  run.masked_L1 = run.result.L_final;
  run.test_L0 = loss(cfg.theta0, split.test);
  run.test_L1 = loss(run.result.theta_final, split.test);
  return run;
}

}  // namespace kstune::testing
