#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "kstune/assemble.hpp"

namespace kstune {

using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Relative residual bound every KKT solve must meet.
inline constexpr double kKktResidualTol = 1e-8;
/// Maximum number of iterative refinement steps after the direct solve.
inline constexpr int kKktRefinementSteps = 2;

/// The KKT matrix
///
///     [ 0  D^T  B^T ]
///     [ D  -I   0   ]
///     [ B  0    0   ]
///
/// acting on (z, v, eta). The full diagonal is stored (explicit zeros in the
/// z and eta blocks) so that diagonal regularization never changes the
/// sparsity pattern.
struct KktSystem {
  SparseColMatrix M;
  Index num_vars = 0;       // N
  Index num_residuals = 0;  // N - n
  Index num_constraints = 0;
  double reg = 0.0;
  std::vector<int> diag_pos;  // value index of M(j, j) for each column j

  Index order() const { return num_vars + num_residuals + num_constraints; }
  Index v_offset() const { return num_vars; }
  Index eta_offset() const { return num_vars + num_residuals; }
};

inline KktSystem build_kkt(const SparseProblem& prob) {
  KktSystem sys;
  sys.num_vars = prob.D.cols();
  sys.num_residuals = prob.D.rows();
  sys.num_constraints = prob.B.rows();
  const Index N = sys.num_vars;
  const Index v0 = sys.v_offset();
  const Index e0 = sys.eta_offset();

  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(static_cast<std::size_t>(2 * prob.D.nonZeros() + 2 * prob.B.nonZeros() + sys.order()));
  auto add = [&](Index r, Index c, double value) {
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), value);
  };
  for (Index r = 0; r < prob.D.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(prob.D, r); it; ++it) {
      add(v0 + r, it.col(), it.value());
      add(it.col(), v0 + r, it.value());
    }
  }
  for (Index r = 0; r < prob.B.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(prob.B, r); it; ++it) {
      add(e0 + r, it.col(), it.value());
      add(it.col(), e0 + r, it.value());
    }
  }
  for (Index j = 0; j < N; ++j) add(j, j, 0.0);
  for (Index j = 0; j < sys.num_residuals; ++j) add(v0 + j, v0 + j, -1.0);
  for (Index j = 0; j < sys.num_constraints; ++j) add(e0 + j, e0 + j, 0.0);

  sys.M.resize(sys.order(), sys.order());
  sys.M.setFromTriplets(triplets.begin(), triplets.end());
  sys.M.makeCompressed();

  sys.diag_pos.resize(static_cast<std::size_t>(sys.order()));
  const int* outer = sys.M.outerIndexPtr();
  const int* inner = sys.M.innerIndexPtr();
  for (Index j = 0; j < sys.order(); ++j) {
    const int* pos = std::lower_bound(inner + outer[j], inner + outer[j + 1], static_cast<int>(j));
    sys.diag_pos[static_cast<std::size_t>(j)] = static_cast<int>(pos - inner);
  }
  return sys;
}

/// Copy of `sys` with +reg added on the z block and -reg on the v and eta
/// blocks, which pushes M towards a quasi-definite matrix.
inline KktSystem regularized(const KktSystem& sys, double reg) {
  KktSystem out = sys;
  double* values = out.M.valuePtr();
  for (Index j = 0; j < out.order(); ++j) {
    values[out.diag_pos[static_cast<std::size_t>(j)]] += (j < out.num_vars) ? reg : -reg;
  }
  out.reg = sys.reg + reg;
  return out;
}

/// max_j ||row_j||_1, i.e. the infinity norm of M.
inline double infinity_norm(const SparseColMatrix& M) {
  Vector row_sums = Vector::Zero(M.rows());
  for (Index c = 0; c < M.outerSize(); ++c) {
    for (SparseColMatrix::InnerIterator it(M, c); it; ++it) row_sums[it.row()] += std::abs(it.value());
  }
  return row_sums.size() ? row_sums.maxCoeff() : 0.0;
}

/// ||M u - b||_inf / max(1, ||b||_inf).
inline double relative_residual(const SparseColMatrix& M, const Vector& u, const Vector& b) {
  const double scale = std::max(1.0, b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0);
  const Vector r = M * u - b;
  return (r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0) / scale;
}

/// Running record of solve() calls on this thread.
struct SolveStats {
  long long solves = 0;
  double max_residual = 0.0;  // relative, as in relative_residual()
};

inline SolveStats& solve_stats() {
  thread_local SolveStats stats;
  return stats;
}

inline void reset_solve_stats() { solve_stats() = {}; }

class KktFactorization;
KktFactorization factorize(const KktSystem& sys);
KktFactorization refactor_values(KktFactorization fact, const KktSystem& sys);
Vector solve(const KktFactorization& fact, const Vector& b);

/// Sparse LU factors of the (possibly regularized) KKT matrix.
///
/// The fill-reducing column ordering is computed once from the pattern and
/// kept across refactor_values() calls. A finished factorization is only
/// read by solve(), so concurrent solves are fine.
class KktFactorization {
 public:
  using Solver = Eigen::SparseLU<SparseColMatrix, Eigen::COLAMDOrdering<int>>;

  KktFactorization(KktFactorization&&) noexcept = default;
  KktFactorization& operator=(KktFactorization&&) noexcept = default;

  /// Regularization actually applied to the diagonal (0 if none was needed).
  double reg() const { return reg_; }
  Index order() const { return matrix_.rows(); }
  /// The matrix that was factorized, including any regularization.
  const SparseColMatrix& matrix() const { return matrix_; }

 private:
  KktFactorization() : lu_(std::make_unique<Solver>()) {}

  bool same_pattern(const SparseColMatrix& M) const {
    if (M.rows() != matrix_.rows() || M.cols() != matrix_.cols() || M.nonZeros() != matrix_.nonZeros()) {
      return false;
    }
    const auto outer_size = static_cast<std::size_t>(M.outerSize() + 1);
    const auto nnz = static_cast<std::size_t>(M.nonZeros());
    return std::equal(M.outerIndexPtr(), M.outerIndexPtr() + outer_size, matrix_.outerIndexPtr()) &&
           std::equal(M.innerIndexPtr(), M.innerIndexPtr() + nnz, matrix_.innerIndexPtr());
  }

  // Direct solve plus refinement; returns false if the bound is not met.
  bool try_solve(const Vector& b, Vector& u, double* residual = nullptr) const {
    u = lu_->solve(b);
    if (!u.allFinite()) return false;
    const double scale = std::max(1.0, b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0);
    for (int step = 0;; ++step) {
      const Vector r = b - matrix_ * u;
      const double res = (r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0) / scale;
      if (residual) *residual = res;
      if (res <= kKktResidualTol) return true;
      if (step == kKktRefinementSteps) return false;
      u += lu_->solve(r);
      if (!u.allFinite()) return false;
    }
  }

  // Numeric factorization of `sys`, escalating regularization from
  // 1e-10 ||M|| up to 1e-6 ||M|| (doubling) when M is numerically singular.
  void factor_numeric(const KktSystem& sys) {
    if (try_numeric(sys)) return;
    const double norm = std::max(infinity_norm(sys.M), 1.0);
    for (double reg = 1e-10 * norm; reg <= 1e-6 * norm * (1.0 + 1e-12); reg *= 2.0) {
      if (try_numeric(regularized(sys, reg))) return;
    }
    fail(ErrorKind::SingularAfterRegularization,
         "KKT matrix of order " + std::to_string(sys.order()) + " stayed singular up to reg=1e-6*||M||");
  }

  bool try_numeric(const KktSystem& sys) {
    matrix_ = sys.M;
    reg_ = sys.reg;
    lu_->factorize(matrix_);
    if (lu_->info() != Eigen::Success) return false;
    // Probe with a fixed right-hand side to catch near-singular pivots that
    // the LU does not flag.
    Vector probe(order());
    for (Index i = 0; i < order(); ++i) probe[i] = 1.0 + static_cast<double>(i % 7) / 7.0;
    Vector u;
    return try_solve(probe, u);
  }

  std::unique_ptr<Solver> lu_;
  SparseColMatrix matrix_;
  double reg_ = 0.0;

  friend KktFactorization factorize(const KktSystem& sys);
  friend KktFactorization refactor_values(KktFactorization fact, const KktSystem& sys);
  friend Vector solve(const KktFactorization& fact, const Vector& b);
};

inline KktFactorization factorize(const KktSystem& sys) {
  KktFactorization fact;
  fact.lu_->analyzePattern(sys.M);
  fact.factor_numeric(sys);
  return fact;
}

/// Numeric refactorization for new values on the same pattern; the column
/// ordering from the original analysis is reused.
inline KktFactorization refactor_values(KktFactorization fact, const KktSystem& sys) {
  if (!fact.same_pattern(sys.M)) {
    fail(ErrorKind::PatternMismatch, "KKT pattern differs from the factorized one (order " +
                                         std::to_string(sys.order()) + " vs " + std::to_string(fact.order()) + ")");
  }
  fact.factor_numeric(sys);
  return fact;
}

/// Solves M u = b with the cached factors.
inline Vector solve(const KktFactorization& fact, const Vector& b) {
  if (b.size() != fact.order()) {
    fail(ErrorKind::LengthMismatch,
         "rhs has length " + std::to_string(b.size()) + ", KKT order is " + std::to_string(fact.order()));
  }
  Vector u;
  double residual = 0.0;
  const bool ok = fact.try_solve(b, u, &residual);
  SolveStats& stats = solve_stats();
  ++stats.solves;
  stats.max_residual = std::max(stats.max_residual, residual);
  if (!ok) fail(ErrorKind::SolverFailure, "KKT solve did not reach the residual bound after refinement");
  return u;
}

}  // namespace kstune
