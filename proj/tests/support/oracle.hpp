#pragma once

// Slow dense reference implementations. Nothing here touches the sparse
// assembly, the KKT factorization or the adjoint code.

#include <Eigen/Dense>

#include "kstune/core.hpp"
#include "kstune/grad.hpp"

namespace kstune::oracle {

inline constexpr Index kMaxVars = 500;

// Dense residual operator over z = (x_0..x_{T-1}, y_0..y_{T-1}).
inline Matrix dense_operator(const ParameterSet& P, Index T) {
  const Index n = P.n();
  const Index p = P.p();
  const Index N = T * (n + p);
  Matrix D = Matrix::Zero(N - n, N);
  for (Index t = 0; t + 1 < T; ++t) {
    // Wisqrt (x_{t+1} - A x_t)
    D.block(t * n, t * n, n, n) = -P.Wisqrt * P.A;
    D.block(t * n, (t + 1) * n, n, n) = P.Wisqrt;
  }
  const Index out_rows = (T - 1) * n;
  for (Index t = 0; t < T; ++t) {
    // Visqrt (y_t - C x_t)
    D.block(out_rows + t * p, t * n, p, n) = -P.Visqrt * P.C;
    D.block(out_rows + t * p, T * n + t * p, p, p) = P.Visqrt;
  }
  return D;
}

/// Minimizes ||D z||^2 subject to yhat = y on `constrained` by substituting
/// the constrained outputs and solving the reduced least squares problem
/// with a column-pivoted Householder QR.
inline SmootherSolution dense_smooth(const ParameterSet& params, const MeasurementSet& meas,
                                     const EntrySet& constrained) {
  const Index T = meas.T();
  const Index n = params.n();
  const Index p = params.p();
  const Index N = T * (n + p);
  if (N > kMaxVars) fail(ErrorKind::TooLargeForOracle, "N=" + std::to_string(N) + " exceeds " + std::to_string(kMaxVars));
  const Matrix D = dense_operator(params, T);

  std::vector<bool> fixed(static_cast<std::size_t>(N), false);
  Vector z = Vector::Zero(N);
  for (const Entry& e : constrained) {
    const Index j = T * n + e.t * p + e.i;
    fixed[static_cast<std::size_t>(j)] = true;
    z[j] = meas.value(e);
  }
  std::vector<Index> free_cols;
  for (Index j = 0; j < N; ++j) {
    if (!fixed[static_cast<std::size_t>(j)]) free_cols.push_back(j);
  }
  Matrix DF(D.rows(), static_cast<Index>(free_cols.size()));
  for (std::size_t k = 0; k < free_cols.size(); ++k) DF.col(static_cast<Index>(k)) = D.col(free_cols[k]);
  const Vector rhs = -(D * z);
  const Vector zf = DF.colPivHouseholderQr().solve(rhs);
  for (std::size_t k = 0; k < free_cols.size(); ++k) z[free_cols[k]] = zf[static_cast<Index>(k)];

  SmootherSolution sol;
  sol.z = z;
  sol.v = D * z;
  // Stationarity of the Lagrangian: D^T v + B^T eta = 0.
  const Vector Dtv = D.transpose() * sol.v;
  sol.eta.resize(static_cast<Index>(constrained.size()));
  for (std::size_t k = 0; k < constrained.size(); ++k) {
    const Entry& e = constrained[k];
    sol.eta[static_cast<Index>(k)] = -Dtv[T * n + e.t * p + e.i];
  }
  sol.xhat.resize(T, n);
  sol.yhat.resize(T, p);
  for (Index t = 0; t < T; ++t) {
    sol.xhat.row(t) = z.segment(t * n, n).transpose();
    sol.yhat.row(t) = z.segment(T * n + t * p, p).transpose();
  }
  return sol;
}

inline double dense_loss(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& masked,
                         const EntrySet& constrained) {
  const SmootherSolution sol = dense_smooth(params, meas, constrained);
  double L = 0.0;
  for (const Entry& e : masked) {
    const double r = sol.yhat(e.t, e.i) - meas.value(e);
    L += r * r;
  }
  return L;
}

/// Central differences of the dense masked loss, one coordinate at a time,
/// with step h_rel * (1 + |theta_j|).
inline ParameterGradient fd_gradient(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& masked,
                                     const EntrySet& constrained, double h_rel = 1e-6) {
  const Index N = meas.T() * (params.n() + params.p());
  if (N > kMaxVars) fail(ErrorKind::TooLargeForOracle, "N=" + std::to_string(N) + " exceeds " + std::to_string(kMaxVars));
  const Vector theta = params.to_vector();
  Vector g(theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    const double h = h_rel * (1.0 + std::abs(theta[j]));
    Vector plus = theta;
    Vector minus = theta;
    plus[j] += h;
    minus[j] -= h;
    const double Lp = dense_loss(ParameterSet::from_vector(params.n(), params.p(), plus), meas, masked, constrained);
    const double Lm = dense_loss(ParameterSet::from_vector(params.n(), params.p(), minus), meas, masked, constrained);
    g[j] = (Lp - Lm) / (2.0 * h);
  }
  const ParameterSet gs = ParameterSet::from_vector(params.n(), params.p(), g);
  return {gs.A, gs.Wisqrt, gs.C, gs.Visqrt};
}

}  // namespace kstune::oracle
