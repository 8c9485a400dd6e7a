#pragma once

#include <string>

#include <Eigen/SparseCore>

#include "kstune/core.hpp"

namespace kstune {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

struct Range {
  Index start = 0;
  Index size = 0;

  Index end() const { return start + size; }
  bool operator==(const Range&) const = default;
};

/// Block coordinates inside D and z. Time indices are 0-based.
///
/// Rows of D: T-1 dynamics blocks of height n, then T output blocks of
/// height p. Columns (entries of z): T state blocks of width n, then T
/// output blocks of width p.
struct BlockMap {
  Index T = 0;
  Index n = 0;
  Index p = 0;

  Index num_vars() const { return T * (n + p); }
  Index num_residuals() const { return num_vars() - n; }

  Range dyn_row(Index t) const { return {t * n, n}; }
  Range out_row(Index t) const { return {(T - 1) * n + t * p, p}; }
  Range state_col(Index t) const { return {t * n, n}; }
  Range output_col(Index t) const { return {T * n + t * p, p}; }

  Index output_index(const Entry& e) const { return T * n + e.t * p + e.i; }
};

/// minimize 1/2 ||D z||^2 subject to B z = c.
struct SparseProblem {
  SparseRowMatrix D;
  SparseRowMatrix B;
  Vector c;
  EntrySet constrained;
  BlockMap blocks;
};

/// Number of stored entries of D. Structural zeros inside parameter blocks
/// are kept, so this does not depend on the parameter values.
constexpr Index exact_entry_count(Index T, Index n, Index p) {
  return (T - 1) * 2 * n * n + T * (p * n + p * p);
}

namespace detail {

// Walks D in row-major storage order and hands each value slot to `emit`.
// The first call fixes the pattern; later calls with the same dimensions
// produce identical (row, col) sequences.
template <typename Emit>
void for_each_d_entry(const ParameterSet& params, const BlockMap& blocks, Emit&& emit) {
  const Matrix WA = params.Wisqrt * params.A;
  const Matrix VC = params.Visqrt * params.C;
  const Index n = blocks.n;
  const Index p = blocks.p;
  for (Index t = 0; t + 1 < blocks.T; ++t) {
    const Index row0 = blocks.dyn_row(t).start;
    const Index cur = blocks.state_col(t).start;
    const Index next = blocks.state_col(t + 1).start;
    for (Index a = 0; a < n; ++a) {
      for (Index j = 0; j < n; ++j) emit(row0 + a, cur + j, -WA(a, j));
      for (Index j = 0; j < n; ++j) emit(row0 + a, next + j, params.Wisqrt(a, j));
    }
  }
  for (Index t = 0; t < blocks.T; ++t) {
    const Index row0 = blocks.out_row(t).start;
    const Index state = blocks.state_col(t).start;
    const Index out = blocks.output_col(t).start;
    for (Index a = 0; a < p; ++a) {
      for (Index j = 0; j < n; ++j) emit(row0 + a, state + j, -VC(a, j));
      for (Index j = 0; j < p; ++j) emit(row0 + a, out + j, params.Visqrt(a, j));
    }
  }
}

}  // namespace detail

/// Builds D, B and c for the given parameters. `constrained` selects which
/// known outputs become equality constraints on yhat.
inline SparseProblem assemble(const ParameterSet& params, const MeasurementSet& meas, const EntrySet& constrained) {
  validate_dims(params, meas);
  validate_entries(meas, constrained, "constrained");
  for (const Entry& e : constrained) {
    if (!meas.is_known(e.t, e.i)) {
      fail(ErrorKind::ConstrainedNotKnown,
           "constrained entry (" + std::to_string(e.t) + ", " + std::to_string(e.i) + ") is missing");
    }
  }

  SparseProblem prob;
  prob.blocks = BlockMap{meas.T(), params.n(), params.p()};
  prob.constrained = constrained;
  const BlockMap& blocks = prob.blocks;
  const Index rows = blocks.num_residuals();
  const Index cols = blocks.num_vars();
  const Index nnz = exact_entry_count(blocks.T, blocks.n, blocks.p);

  prob.D.resize(rows, cols);
  prob.D.resizeNonZeros(nnz);
  int* outer = prob.D.outerIndexPtr();
  int* inner = prob.D.innerIndexPtr();
  double* values = prob.D.valuePtr();
  Index k = 0;
  Index last_row = -1;
  detail::for_each_d_entry(params, blocks, [&](Index r, Index c, double value) {
    while (last_row < r) outer[++last_row] = static_cast<int>(k);
    inner[k] = static_cast<int>(c);
    values[k] = value;
    ++k;
  });
  while (last_row < rows) outer[++last_row] = static_cast<int>(k);

  const auto K = static_cast<Index>(constrained.size());
  prob.B.resize(K, cols);
  prob.B.resizeNonZeros(K);
  prob.c.resize(K);
  for (Index j = 0; j < K; ++j) {
    const Entry& e = constrained[static_cast<std::size_t>(j)];
    prob.B.outerIndexPtr()[j] = static_cast<int>(j);
    prob.B.innerIndexPtr()[j] = static_cast<int>(blocks.output_index(e));
    prob.B.valuePtr()[j] = 1.0;
    prob.c[j] = meas.value(e);
  }
  prob.B.outerIndexPtr()[K] = static_cast<int>(K);
  return prob;
}

/// Rewrites the numeric values of D in place for new parameters with the
/// same dimensions. The sparsity pattern is untouched.
inline void update_values(SparseProblem& prob, const ParameterSet& params) {
  validate(params);
  if (params.n() != prob.blocks.n || params.p() != prob.blocks.p) {
    fail(ErrorKind::DimensionMismatch, "update_values: parameter dimensions changed");
  }
  double* values = prob.D.valuePtr();
  Index k = 0;
  detail::for_each_d_entry(params, prob.blocks, [&](Index, Index, double value) { values[k++] = value; });
}

/// ||D z||^2, the smoothing objective without the 1/2.
inline double objective_value(const SparseProblem& prob, const Vector& z) {
  return (prob.D * z).squaredNorm();
}

}  // namespace kstune
