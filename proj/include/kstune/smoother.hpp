#pragma once

#include <optional>
#include <string>

#include "kstune/assemble.hpp"
#include "kstune/kkt.hpp"

namespace kstune {

/// Everything produced by one forward solve. The gradient pass needs the
/// problem and the cached factorization, not just the solution.
struct ForwardPass {
  SparseProblem prob;
  KktFactorization fact;
  SmootherSolution sol;
};

namespace detail {

inline SmootherSolution unpack_solution(const SparseProblem& prob, const Vector& u) {
  const BlockMap& b = prob.blocks;
  const Index N = b.num_vars();
  const Index R = b.num_residuals();
  SmootherSolution sol;
  sol.z = u.head(N);
  sol.v = u.segment(N, R);
  sol.eta = u.tail(u.size() - N - R);
  sol.xhat.resize(b.T, b.n);
  sol.yhat.resize(b.T, b.p);
  for (Index t = 0; t < b.T; ++t) {
    sol.xhat.row(t) = sol.z.segment(b.state_col(t).start, b.n).transpose();
    sol.yhat.row(t) = sol.z.segment(b.output_col(t).start, b.p).transpose();
  }
  return sol;
}

inline ForwardPass finish_forward(SparseProblem prob, KktFactorization fact) {
  Vector rhs = Vector::Zero(fact.order());
  rhs.tail(prob.c.size()) = prob.c;
  SmootherSolution sol = unpack_solution(prob, solve(fact, rhs));
  return {std::move(prob), std::move(fact), std::move(sol)};
}

}  // namespace detail

/// Solves the smoothing problem with equality constraints on `constrained`.
inline ForwardPass forward(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& constrained) {
  SparseProblem prob = assemble(params, meas, constrained);
  KktFactorization fact = factorize(build_kkt(prob));
  return detail::finish_forward(std::move(prob), std::move(fact));
}

/// Same as above but reuses the symbolic analysis of `previous` when the
/// KKT pattern is unchanged.
inline ForwardPass forward(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& constrained,
                           KktFactorization previous) {
  SparseProblem prob = assemble(params, meas, constrained);
  KktSystem sys = build_kkt(prob);
  std::optional<KktFactorization> fact;
  try {
    fact.emplace(refactor_values(std::move(previous), sys));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::PatternMismatch) throw;
    fact.emplace(factorize(sys));
  }
  return detail::finish_forward(std::move(prob), std::move(*fact));
}

inline SmootherSolution smooth(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& constrained) {
  return forward(params, meas, constrained).sol;
}

/// Sum of squared output errors over `masked`.
inline double prediction_error(const SmootherSolution& sol, const MeasurementSet& meas, const EntrySet& masked) {
  validate_entries(meas, masked, "masked");
  double L = 0.0;
  for (const Entry& e : masked) {
    if (!meas.is_known(e.t, e.i)) {
      fail(ErrorKind::MaskedEntryMissing,
           "masked entry (" + std::to_string(e.t) + ", " + std::to_string(e.i) + ") has no measured value");
    }
    const double r = sol.yhat(e.t, e.i) - meas.value(e);
    L += r * r;
  }
  return L;
}

struct JudgeResult {
  double train_L = 0.0;
  double test_L = 0.0;
  SmootherSolution sol;
};

/// Smooths with known minus (masked and test) and scores both held-out sets.
inline JudgeResult judge(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& masked,
                         const EntrySet& test) {
  if (!masked.intersect(test).empty()) fail(ErrorKind::ConfigError, "masked and test sets overlap");
  const EntrySet constrained = meas.known().minus(masked.unite(test));
  JudgeResult out;
  out.sol = smooth(params, meas, constrained);
  out.train_L = prediction_error(out.sol, meas, masked);
  out.test_L = prediction_error(out.sol, meas, test);
  return out;
}

}  // namespace kstune
