#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "kstune/grad.hpp"
#include "kstune/prox.hpp"

namespace kstune {

struct TuneConfig {
  ParameterSet theta0;
  Regularizer reg;
  double t0 = 1e-4;
  int n_iter = 50;
  double eps = 1e-6;
  std::uint64_t seed = 0;
};

inline void validate(const TuneConfig& cfg) {
  validate(cfg.theta0);
  validate(cfg.reg);
  if (!(cfg.t0 > 0.0)) fail(ErrorKind::ConfigError, "initial step size must be positive");
  if (!(cfg.eps > 0.0)) fail(ErrorKind::ConfigError, "stopping tolerance must be positive");
  if (cfg.n_iter < 1) fail(ErrorKind::ConfigError, "number of iterations must be at least 1");
}

enum class Termination { converged, max_iters, solver_failure };

constexpr std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iters: return "max_iters";
    case Termination::solver_failure: return "solver_failure";
  }
  return "?";
}

/// One pass of the loop. F, L and r belong to the iterate theta^k the step
/// started from; F_candidate is the value at the proximal candidate.
struct IterationRecord {
  int k = 0;
  double F = 0.0;
  double L = 0.0;
  double r = 0.0;
  double step = 0.0;
  double F_candidate = 0.0;
  bool accepted = false;
  /// Stopping-criterion norm; only set on accepted steps.
  std::optional<double> criterion;
};

struct TuneResult {
  ParameterSet theta_final;
  double F_final = 0.0;
  double L_final = 0.0;
  double r_final = 0.0;
  std::vector<IterationRecord> history;
  Termination termination = Termination::max_iters;
};

struct Objective {
  double F = 0.0;
  double L = 0.0;
  double r = 0.0;
};

/// F = L + r. Outside the allowable set F = L = r = +infinity and no
/// smoothing problem is solved.
inline Objective objective_F(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& masked,
                             const EntrySet& constrained, const Regularizer& reg) {
  const double r = eval_r(reg, params);
  if (!std::isfinite(r)) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf, inf};
  }
  const double L = prediction_error(smooth(params, meas, constrained), meas, masked);
  return {L + r, L, r};
}

using ProgressCallback = std::function<void(const IterationRecord&)>;

/// Proximal gradient auto-tuning with the 1.5x / 0.5x step rule.
///
/// Per iteration: step theta - t g, prox, evaluate F at the candidate, and
/// accept iff F(candidate) <= F(theta). An accepted candidate's forward
/// solve is kept, so its gradient costs only a backsolve; a rejected
/// step reuses the gradient at the unchanged theta.
inline TuneResult tune(const TuneConfig& cfg, const MeasurementSet& meas, const EntrySet& masked,
                       const EntrySet& constrained, const ProgressCallback& progress = {}) {
  validate(cfg);
  validate_dims(cfg.theta0, meas);
  if (masked.empty()) fail(ErrorKind::ConfigError, "masked set is empty; nothing to tune against");
  if (!masked.intersect(constrained).empty()) fail(ErrorKind::ConfigError, "masked entries are also constrained");
  const double r0 = eval_r(cfg.reg, cfg.theta0);
  if (!std::isfinite(r0)) fail(ErrorKind::ConfigError, "initial parameters are outside the allowable set");

  TuneResult result;
  result.theta_final = cfg.theta0;

  ParameterSet theta = cfg.theta0;
  // Factorization of the last solved system, kept for symbolic reuse.
  std::optional<KktFactorization> last_fact;
  Objective obj;
  ParameterGradient g;
  try {
    ForwardPass pass = forward(theta, meas, constrained);
    const GradientResult gr = gradient(theta, meas, masked, pass);
    obj = {gr.L + r0, gr.L, r0};
    g = gr.grad;
    last_fact.emplace(std::move(pass.fact));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SingularAfterRegularization && e.kind() != ErrorKind::SolverFailure) throw;
    result.termination = Termination::solver_failure;
    return result;
  }
  result.F_final = obj.F;
  result.L_final = obj.L;
  result.r_final = obj.r;

  double step = cfg.t0;
  result.termination = Termination::max_iters;
  for (int k = 1; k <= cfg.n_iter; ++k) {
    IterationRecord rec{k, obj.F, obj.L, obj.r, step, 0.0, false, std::nullopt};

    const ParameterSet candidate = prox(cfg.reg, step, gradient_step(theta, g, step));
    const double r_cand = eval_r(cfg.reg, candidate);

    std::optional<ForwardPass> cand_pass;
    Objective cand{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), r_cand};
    if (std::isfinite(r_cand)) {
      try {
        cand_pass.emplace(last_fact ? forward(candidate, meas, constrained, std::move(*last_fact))
                                    : forward(candidate, meas, constrained));
        last_fact.reset();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularAfterRegularization && e.kind() != ErrorKind::SolverFailure) throw;
        rec.F_candidate = cand.F;
        result.history.push_back(rec);
        if (progress) progress(rec);
        result.termination = Termination::solver_failure;
        break;
      }
      cand.L = prediction_error(cand_pass->sol, meas, masked);
      cand.F = cand.L + r_cand;
    }
    rec.F_candidate = cand.F;

    if (cand.F <= obj.F) {
      rec.accepted = true;
      const GradientResult gr = gradient(candidate, meas, masked, *cand_pass);
      const Vector diff = (theta.to_vector() - candidate.to_vector()) / step + (gr.grad.to_vector() - g.to_vector());
      rec.criterion = diff.norm();
      theta = candidate;
      obj = cand;
      g = gr.grad;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
    if (cand_pass) last_fact.emplace(std::move(cand_pass->fact));

    result.history.push_back(rec);
    if (progress) progress(rec);
    if (rec.accepted && *rec.criterion <= cfg.eps) {
      result.termination = Termination::converged;
      break;
    }
  }

  result.theta_final = theta;
  result.F_final = obj.F;
  result.L_final = obj.L;
  result.r_final = obj.r;
  return result;
}

}  // namespace kstune
