#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kstune/error.hpp"
#include "kstune/random.hpp"

namespace kstune {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// The tunable smoother parameters (A, W^{-1/2}, C, V^{-1/2}).
struct ParameterSet {
  Matrix A;       // n x n
  Matrix Wisqrt;  // n x n
  Matrix C;       // p x n
  Matrix Visqrt;  // p x p

  Index n() const { return A.rows(); }
  Index p() const { return C.rows(); }

  /// Total number of scalar parameters.
  Index size() const { return A.size() + Wisqrt.size() + C.size() + Visqrt.size(); }

  /// Flattened (A, Wisqrt, C, Visqrt), each column-major.
  Vector to_vector() const {
    Vector out(size());
    Index k = 0;
    for (const Matrix* m : {&A, &Wisqrt, &C, &Visqrt}) {
      out.segment(k, m->size()) = m->reshaped();
      k += m->size();
    }
    return out;
  }

  /// Inverse of to_vector() for the given dimensions.
  static ParameterSet from_vector(Index n, Index p, const Vector& v) {
    ParameterSet out{Matrix(n, n), Matrix(n, n), Matrix(p, n), Matrix(p, p)};
    Index k = 0;
    for (Matrix* m : {&out.A, &out.Wisqrt, &out.C, &out.Visqrt}) {
      m->reshaped() = v.segment(k, m->size());
      k += m->size();
    }
    return out;
  }

  bool operator==(const ParameterSet&) const = default;
};

/// Checks shapes are mutually consistent and every value is finite.
inline void validate(const ParameterSet& params) {
  const Index n = params.A.rows();
  const Index p = params.C.rows();
  auto check = [](const Matrix& m, Index rows, Index cols, std::string_view name) {
    if (m.rows() != rows || m.cols() != cols) {
      fail(ErrorKind::DimensionMismatch,
           std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
               ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!m.allFinite()) fail(ErrorKind::DimensionMismatch, std::string(name) + " has non-finite entries");
  };
  if (n == 0) fail(ErrorKind::DimensionMismatch, "A is empty");
  if (p == 0) fail(ErrorKind::DimensionMismatch, "C is empty");
  check(params.A, n, n, "A");
  check(params.Wisqrt, n, n, "Wisqrt");
  check(params.C, p, n, "C");
  check(params.Visqrt, p, p, "Visqrt");
}

/// One scalar output position: time step t and output channel i, both 0-based.
struct Entry {
  Index t = 0;
  Index i = 0;

  auto operator<=>(const Entry&) const = default;
};

/// Lexicographically ordered set of entries without duplicates.
class EntrySet {
 public:
  EntrySet() = default;

  explicit EntrySet(std::vector<Entry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end());
    entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
  }

  EntrySet(std::initializer_list<Entry> entries) : EntrySet(std::vector<Entry>(entries)) {}

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Entry& operator[](std::size_t k) const { return entries_[k]; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  bool contains(const Entry& e) const {
    return std::binary_search(entries_.begin(), entries_.end(), e);
  }

  EntrySet minus(const EntrySet& other) const {
    std::vector<Entry> out;
    std::set_difference(begin(), end(), other.begin(), other.end(), std::back_inserter(out));
    return from_sorted(std::move(out));
  }

  EntrySet unite(const EntrySet& other) const {
    std::vector<Entry> out;
    std::set_union(begin(), end(), other.begin(), other.end(), std::back_inserter(out));
    return from_sorted(std::move(out));
  }

  EntrySet intersect(const EntrySet& other) const {
    std::vector<Entry> out;
    std::set_intersection(begin(), end(), other.begin(), other.end(), std::back_inserter(out));
    return from_sorted(std::move(out));
  }

  /// Entries whose channel is in `channels`.
  EntrySet restrict_channels(const std::vector<Index>& channels) const {
    std::vector<Entry> out;
    for (const Entry& e : entries_) {
      if (std::find(channels.begin(), channels.end(), e.i) != channels.end()) out.push_back(e);
    }
    return from_sorted(std::move(out));
  }

  bool operator==(const EntrySet&) const = default;

 private:
  static EntrySet from_sorted(std::vector<Entry> sorted) {
    EntrySet s;
    s.entries_ = std::move(sorted);
    return s;
  }

  std::vector<Entry> entries_;
};

/// T x p outputs where NaN marks a missing value.
class MeasurementSet {
 public:
  MeasurementSet() = default;

  /// `values` is T x p; NaN entries are missing, everything else is known.
  explicit MeasurementSet(Matrix values) : values_(std::move(values)) {
    if (values_.rows() == 0 || values_.cols() == 0) {
      fail(ErrorKind::DimensionMismatch, "measurement array must have T >= 1 and p >= 1");
    }
    std::vector<Entry> known;
    for (Index t = 0; t < values_.rows(); ++t) {
      for (Index i = 0; i < values_.cols(); ++i) {
        const double y = values_(t, i);
        if (std::isnan(y)) continue;
        if (!std::isfinite(y)) {
          fail(ErrorKind::ParseError, "measurement (" + std::to_string(t) + ", " + std::to_string(i) +
                                          ") is not finite");
        }
        known.push_back({t, i});
      }
    }
    known_ = EntrySet(std::move(known));
  }

  static constexpr double missing() { return std::numeric_limits<double>::quiet_NaN(); }

  Index T() const { return values_.rows(); }
  Index p() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const EntrySet& known() const { return known_; }

  bool is_known(Index t, Index i) const { return !std::isnan(values_(t, i)); }
  double value(const Entry& e) const { return values_(e.t, e.i); }

  /// Copy with `hidden` entries replaced by the missing marker.
  MeasurementSet hide(const EntrySet& hidden) const {
    Matrix v = values_;
    for (const Entry& e : hidden) v(e.t, e.i) = missing();
    return MeasurementSet(std::move(v));
  }

 private:
  Matrix values_;
  EntrySet known_;
};

/// Output of a smoothing solve. z = (x_0..x_{T-1}, y_0..y_{T-1}).
struct SmootherSolution {
  Matrix xhat;  // T x n, row t is the state estimate at t
  Matrix yhat;  // T x p
  Vector z;
  Vector v;     // residual Dz
  Vector eta;   // multipliers of the equality constraints
};

inline void validate_entries(const MeasurementSet& meas, const EntrySet& entries, std::string_view name) {
  for (const Entry& e : entries) {
    if (e.t < 0 || e.t >= meas.T() || e.i < 0 || e.i >= meas.p()) {
      fail(ErrorKind::IndexOutOfBounds, std::string(name) + " entry (" + std::to_string(e.t) + ", " +
                                            std::to_string(e.i) + ") outside " + std::to_string(meas.T()) +
                                            "x" + std::to_string(meas.p()));
    }
  }
}

inline void validate_dims(const ParameterSet& params, const MeasurementSet& meas) {
  validate(params);
  if (meas.p() != params.p()) {
    fail(ErrorKind::DimensionMismatch, "measurements have p=" + std::to_string(meas.p()) +
                                           " but C has " + std::to_string(params.p()) + " rows");
  }
  validate_entries(meas, meas.known(), "known");
}

struct KnownSplit {
  EntrySet train;
  EntrySet masked;
  EntrySet test;
};

/// Randomly partitions `known` into train / masked / test.
///
/// The known entries, in lexicographic order, are shuffled with Rng(seed);
/// the first round(mask_frac*|known|) become `masked`, the next
/// round(test_frac*|known|) become `test`, the remainder is `train`.
inline KnownSplit split_known(const EntrySet& known, double mask_frac, double test_frac, std::uint64_t seed) {
  if (known.empty()) fail(ErrorKind::EmptyKnownSet, "cannot split an empty known set");
  if (!(mask_frac >= 0.0 && mask_frac < 1.0) || !(test_frac >= 0.0 && test_frac < 1.0) ||
      !(mask_frac + test_frac < 1.0)) {
    fail(ErrorKind::FractionsExceedOne, "mask_frac=" + std::to_string(mask_frac) +
                                            " test_frac=" + std::to_string(test_frac));
  }
  const auto total = static_cast<double>(known.size());
  const auto n_masked = static_cast<std::size_t>(std::round(mask_frac * total));
  const auto n_test = static_cast<std::size_t>(std::round(test_frac * total));

  std::vector<Entry> order = known.entries();
  Rng rng(seed);
  rng.shuffle(order);

  auto slice = [&](std::size_t from, std::size_t to) {
    return EntrySet(std::vector<Entry>(order.begin() + static_cast<std::ptrdiff_t>(from),
                                       order.begin() + static_cast<std::ptrdiff_t>(to)));
  };
  return {slice(n_masked + n_test, order.size()), slice(0, n_masked), slice(n_masked, n_masked + n_test)};
}

}  // namespace kstune
