#pragma once

#include "kstune/smoother.hpp"

namespace kstune {

/// Gradient of the prediction error with respect to each parameter matrix.
struct ParameterGradient {
  Matrix dA;
  Matrix dWisqrt;
  Matrix dC;
  Matrix dVisqrt;

  static ParameterGradient zeros(Index n, Index p) {
    return {Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(p, n), Matrix::Zero(p, p)};
  }

  /// Same layout as ParameterSet::to_vector().
  Vector to_vector() const {
    return ParameterSet{dA, dWisqrt, dC, dVisqrt}.to_vector();
  }
};

/// theta - step * grad, matrix by matrix.
inline ParameterSet gradient_step(const ParameterSet& theta, const ParameterGradient& grad, double step) {
  return {theta.A - step * grad.dA, theta.Wisqrt - step * grad.dWisqrt, theta.C - step * grad.dC,
          theta.Visqrt - step * grad.dVisqrt};
}

/// dL/d(z, v, eta): 2 (yhat - y) at masked output positions, zero elsewhere.
inline Vector seed_gradient(const SmootherSolution& sol, const MeasurementSet& meas, const EntrySet& masked) {
  validate_entries(meas, masked, "masked");
  const Index T = sol.yhat.rows();
  const Index n = sol.xhat.cols();
  const Index p = sol.yhat.cols();
  Vector g = Vector::Zero(sol.z.size() + sol.v.size() + sol.eta.size());
  for (const Entry& e : masked) {
    if (!meas.is_known(e.t, e.i)) {
      fail(ErrorKind::MaskedEntryMissing,
           "masked entry (" + std::to_string(e.t) + ", " + std::to_string(e.i) + ") has no measured value");
    }
    g[T * n + e.t * p + e.i] = 2.0 * (sol.yhat(e.t, e.i) - meas.value(e));
  }
  return g;
}

struct AdjointSolution {
  Vector q1;  // length N
  Vector q2;  // length N - n
  Vector q3;  // length |constrained|
};

/// Solves M q = -g with the factorization from the forward pass.
inline AdjointSolution adjoint_solve(const KktFactorization& fact, const SparseProblem& prob, const Vector& g) {
  const Vector q = solve(fact, -g);
  const Index N = prob.blocks.num_vars();
  const Index R = prob.blocks.num_residuals();
  return {q.head(N), q.segment(N, R), q.tail(q.size() - N - R)};
}

/// dL/dD on the stored pattern of D:
///   G_ij = ((D q1)_i z_j + (D z)_i (q1)_j) / (1 + reg).
///
/// `reg` is the diagonal regularization of the factorized KKT matrix; with
/// it the (2,2) block is -(1 + reg) I, which rescales both v and q2.
inline SparseRowMatrix grad_wrt_D(const SparseProblem& prob, const Vector& z, const Vector& q1, double reg = 0.0) {
  const double scale = 1.0 / (1.0 + reg);
  const Vector Dq1 = prob.D * q1;
  const Vector Dz = prob.D * z;
  SparseRowMatrix G = prob.D;
  for (Index r = 0; r < G.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(G, r); it; ++it) {
      it.valueRef() = scale * (Dq1[r] * z[it.col()] + Dz[r] * q1[it.col()]);
    }
  }
  return G;
}

/// Chain rule from dL/dD to the four parameter matrices.
inline ParameterGradient grad_wrt_params(const SparseRowMatrix& G, const BlockMap& blocks, const ParameterSet& params) {
  const Index T = blocks.T;
  const Index n = blocks.n;
  const Index p = blocks.p;
  // Block sums over time of G restricted to each parameter block of D.
  Matrix dyn_cur = Matrix::Zero(n, n);
  Matrix dyn_next = Matrix::Zero(n, n);
  Matrix out_state = Matrix::Zero(p, n);
  Matrix out_out = Matrix::Zero(p, p);

  const Index dyn_rows = (T - 1) * n;
  for (Index r = 0; r < G.outerSize(); ++r) {
    if (r < dyn_rows) {
      const Index t = r / n;
      const Index a = r % n;
      const Index cur = blocks.state_col(t).start;
      const Index next = blocks.state_col(t + 1).start;
      for (SparseRowMatrix::InnerIterator it(G, r); it; ++it) {
        if (it.col() < next) {
          dyn_cur(a, it.col() - cur) += it.value();
        } else {
          dyn_next(a, it.col() - next) += it.value();
        }
      }
    } else {
      const Index t = (r - dyn_rows) / p;
      const Index a = (r - dyn_rows) % p;
      const Index state = blocks.state_col(t).start;
      const Index out = blocks.output_col(t).start;
      for (SparseRowMatrix::InnerIterator it(G, r); it; ++it) {
        if (it.col() < out) {
          out_state(a, it.col() - state) += it.value();
        } else {
          out_out(a, it.col() - out) += it.value();
        }
      }
    }
  }

  ParameterGradient grad;
  grad.dA = -params.Wisqrt.transpose() * dyn_cur;
  grad.dWisqrt = dyn_next - dyn_cur * params.A.transpose();
  grad.dC = -params.Visqrt.transpose() * out_state;
  grad.dVisqrt = out_out - out_state * params.C.transpose();
  return grad;
}

struct GradientResult {
  double L = 0.0;
  ParameterGradient grad;
};

/// Prediction error on `masked` and its gradient, reusing the factorization
/// held by `fp`. `params` must be the parameters `fp` was computed with.
inline GradientResult gradient(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& masked,
                               const ForwardPass& fp) {
  GradientResult out;
  out.L = prediction_error(fp.sol, meas, masked);
  if (masked.empty()) {
    out.grad = ParameterGradient::zeros(params.n(), params.p());
    return out;
  }
  const Vector g = seed_gradient(fp.sol, meas, masked);
  const AdjointSolution q = adjoint_solve(fp.fact, fp.prob, g);
  const SparseRowMatrix G = grad_wrt_D(fp.prob, fp.sol.z, q.q1, fp.fact.reg());
  out.grad = grad_wrt_params(G, fp.prob.blocks, params);
  return out;
}

}  // namespace kstune
