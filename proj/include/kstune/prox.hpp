#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/SVD>

#include "kstune/core.hpp"

namespace kstune {

enum class Target { A, Wisqrt, C, Visqrt };

inline constexpr std::array<Target, 4> kAllTargets{Target::A, Target::Wisqrt, Target::C, Target::Visqrt};

constexpr std::string_view to_string(Target target) noexcept {
  switch (target) {
    case Target::A: return "A";
    case Target::Wisqrt: return "Wisqrt";
    case Target::C: return "C";
    case Target::Visqrt: return "Visqrt";
  }
  return "?";
}

inline Matrix& select(ParameterSet& params, Target target) {
  switch (target) {
    case Target::A: return params.A;
    case Target::Wisqrt: return params.Wisqrt;
    case Target::C: return params.C;
    case Target::Visqrt: return params.Visqrt;
  }
  return params.A;
}

inline const Matrix& select(const ParameterSet& params, Target target) {
  return select(const_cast<ParameterSet&>(params), target);
}

// Penalty kinds.

/// weight * ||X - nominal||_F^2
struct QuadDeviation {
  Matrix nominal;
  double weight = 0.0;
};

/// weight * sum_{i != j} X_ij^2
struct OffdiagQuad {
  double weight = 0.0;
};

/// weight * ||X||_* (sum of singular values)
struct Nuclear {
  double weight = 0.0;
};

using PenaltyKind = std::variant<QuadDeviation, OffdiagQuad, Nuclear>;

struct Penalty {
  Target target;
  PenaltyKind kind;
};

// Constraint kinds, each the indicator of a set.

/// X == nominal
struct Fixed {
  Matrix nominal;
};

/// X_ij == nominal_ij wherever mask_ij is set
struct FixedEntries {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  Matrix nominal;
};

/// |X_ij - nominal_ij| <= rho
struct Box {
  Matrix nominal;
  double rho = 0.0;
};

/// X_ij >= 0
struct Nonneg {};

/// X diagonal with nonnegative diagonal
struct DiagonalNonneg {};

/// X == X^T
struct Symmetric {};

using ConstraintKind = std::variant<Fixed, FixedEntries, Box, Nonneg, DiagonalNonneg, Symmetric>;

struct Constraint {
  Target target;
  ConstraintKind kind;
};

/// r(theta) as a sum of penalties plus the indicator of the allowable set.
struct Regularizer {
  std::vector<Penalty> penalties;
  std::vector<Constraint> constraints;

  bool empty() const { return penalties.empty() && constraints.empty(); }
};

namespace detail {

inline double membership_tol(double scale) { return 1e-12 * std::max(1.0, scale); }

inline void check_shape(const Matrix& m, const Matrix& x, std::string_view what) {
  if (m.rows() != x.rows() || m.cols() != x.cols()) {
    fail(ErrorKind::DimensionMismatch, std::string(what) + " nominal is " + std::to_string(m.rows()) + "x" +
                                           std::to_string(m.cols()) + ", parameter is " +
                                           std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

// Entrywise interval [lo, hi] when the constraint is one, empty otherwise.
struct Interval {
  Matrix lo;
  Matrix hi;
};

inline std::optional<Interval> as_interval(const ConstraintKind& kind, const Matrix& x) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Index r = x.rows();
  const Index c = x.cols();
  return std::visit(
      [&](const auto& k) -> std::optional<Interval> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Fixed>) {
          check_shape(k.nominal, x, "fixed");
          return Interval{k.nominal, k.nominal};
        } else if constexpr (std::is_same_v<K, FixedEntries>) {
          check_shape(k.nominal, x, "fixed_entries");
          Interval iv{Matrix::Constant(r, c, -inf), Matrix::Constant(r, c, inf)};
          for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < c; ++j) {
              if (k.mask(i, j)) iv.lo(i, j) = iv.hi(i, j) = k.nominal(i, j);
            }
          }
          return iv;
        } else if constexpr (std::is_same_v<K, Box>) {
          check_shape(k.nominal, x, "box");
          return Interval{k.nominal.array() - k.rho, k.nominal.array() + k.rho};
        } else if constexpr (std::is_same_v<K, Nonneg>) {
          return Interval{Matrix::Zero(r, c), Matrix::Constant(r, c, inf)};
        } else if constexpr (std::is_same_v<K, DiagonalNonneg>) {
          Interval iv{Matrix::Zero(r, c), Matrix::Zero(r, c)};
          for (Index i = 0; i < std::min(r, c); ++i) iv.hi(i, i) = inf;
          return iv;
        } else {
          return std::nullopt;
        }
      },
      kind);
}

inline bool satisfies(const ConstraintKind& kind, const Matrix& x) {
  if (std::holds_alternative<Symmetric>(kind)) {
    if (x.rows() != x.cols()) return false;
    const double tol = membership_tol(x.cwiseAbs().maxCoeff());
    return (x - x.transpose()).cwiseAbs().maxCoeff() <= tol;
  }
  const Interval iv = *as_interval(kind, x);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double lo = iv.lo(i, j);
      const double hi = iv.hi(i, j);
      const double tol = membership_tol(std::max(std::isfinite(lo) ? std::abs(lo) : 0.0,
                                                 std::isfinite(hi) ? std::abs(hi) : 0.0));
      if (x(i, j) < lo - tol || x(i, j) > hi + tol) return false;
    }
  }
  return true;
}

inline double penalty_value(const PenaltyKind& kind, const Matrix& x) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, QuadDeviation>) {
          check_shape(k.nominal, x, "quad_deviation");
          return k.weight * (x - k.nominal).squaredNorm();
        } else if constexpr (std::is_same_v<K, OffdiagQuad>) {
          return k.weight * (x.squaredNorm() - x.diagonal().squaredNorm());
        } else {
          return k.weight * Eigen::JacobiSVD<Matrix>(x).singularValues().sum();
        }
      },
      kind);
}

/// Singular value soft-thresholding at `level`.
inline Matrix soft_threshold_singular_values(const Matrix& x, double level) {
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = (svd.singularValues().array() - level).max(0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Prox of all terms that act on one matrix.
inline Matrix prox_target(const Regularizer& reg, Target target, double t, const Matrix& nu) {
  std::vector<const PenaltyKind*> terms;
  for (const Penalty& p : reg.penalties) {
    if (p.target == target) terms.push_back(&p.kind);
  }
  const ConstraintKind* constraint = nullptr;
  for (const Constraint& c : reg.constraints) {
    if (c.target == target) constraint = &c.kind;
  }

  const bool has_nuclear =
      std::any_of(terms.begin(), terms.end(), [](const PenaltyKind* k) { return std::holds_alternative<Nuclear>(*k); });
  if (has_nuclear) {
    const std::string name(to_string(target));
    if (terms.size() > 1) {
      fail(ErrorKind::NonSeparableCombination, "nuclear norm on " + name + " combined with another penalty");
    }
    const double level = t * std::get<Nuclear>(*terms.front()).weight;
    if (constraint == nullptr) return soft_threshold_singular_values(nu, level);
    if (const auto* fixed = std::get_if<Fixed>(constraint)) return fixed->nominal;
    if (std::holds_alternative<Symmetric>(*constraint)) {
      if (nu.rows() != nu.cols()) fail(ErrorKind::DimensionMismatch, name + " is not square");
      const Matrix x = soft_threshold_singular_values(0.5 * (nu + nu.transpose()), level);
      return 0.5 * (x + x.transpose());
    }
    fail(ErrorKind::NonSeparableCombination, "nuclear norm on " + name + " combined with an entrywise constraint");
  }

  // Every remaining penalty is an entrywise quadratic, so the unconstrained
  // minimizer is numerator / denominator entry by entry.
  Matrix num = nu;
  Matrix den = Matrix::Ones(nu.rows(), nu.cols());
  for (const PenaltyKind* term : terms) {
    if (const auto* q = std::get_if<QuadDeviation>(term)) {
      check_shape(q->nominal, nu, "quad_deviation");
      num += 2.0 * t * q->weight * q->nominal;
      den.array() += 2.0 * t * q->weight;
    } else if (const auto* o = std::get_if<OffdiagQuad>(term)) {
      den.array() += 2.0 * t * o->weight;
      den.diagonal().array() -= 2.0 * t * o->weight;
    }
  }
  Matrix x = num.cwiseQuotient(den);
  if (constraint == nullptr) return x;

  if (std::holds_alternative<Symmetric>(*constraint)) {
    if (x.rows() != x.cols()) fail(ErrorKind::DimensionMismatch, std::string(to_string(target)) + " is not square");
    // den is symmetric, so averaging the pair (ij, ji) is the exact minimizer.
    return 0.5 * (x + x.transpose());
  }
  const Interval iv = *as_interval(*constraint, x);
  return x.cwiseMax(iv.lo).cwiseMin(iv.hi);
}

}  // namespace detail

/// Rejects regularizers with more than one constraint per matrix, negative
/// weights or a non-positive box radius.
inline void validate(const Regularizer& reg) {
  for (Target target : kAllTargets) {
    const auto count = std::count_if(reg.constraints.begin(), reg.constraints.end(),
                                     [&](const Constraint& c) { return c.target == target; });
    if (count > 1) {
      fail(ErrorKind::ConfigError, std::string(to_string(target)) + " appears in more than one constraint");
    }
  }
  for (const Penalty& p : reg.penalties) {
    const double w = std::visit([](const auto& k) { return k.weight; }, p.kind);
    if (!(w >= 0.0)) fail(ErrorKind::ConfigError, "penalty weight must be nonnegative");
  }
  for (const Constraint& c : reg.constraints) {
    if (const auto* box = std::get_if<Box>(&c.kind); box && !(box->rho > 0.0)) {
      fail(ErrorKind::ConfigError, "box radius must be positive");
    }
  }
}

/// True when every constraint holds (up to a 1e-12 relative slack).
inline bool in_allowable_set(const Regularizer& reg, const ParameterSet& params) {
  return std::all_of(reg.constraints.begin(), reg.constraints.end(), [&](const Constraint& c) {
    return detail::satisfies(c.kind, select(params, c.target));
  });
}

/// r(theta); +infinity outside the allowable set.
inline double eval_r(const Regularizer& reg, const ParameterSet& params) {
  if (!in_allowable_set(reg, params)) return std::numeric_limits<double>::infinity();
  double r = 0.0;
  for (const Penalty& p : reg.penalties) r += detail::penalty_value(p.kind, select(params, p.target));
  return r;
}

/// argmin over the allowable set of t r(theta) + 1/2 ||theta - nu||^2.
///
/// The problem splits across the four matrices. Within a matrix:
///   - quadratic penalties combine into an entrywise closed form, then an
///     entrywise constraint is applied by clipping (exact, since both parts
///     are separable per entry) or a symmetry constraint by averaging;
///   - a nuclear norm gives singular value soft-thresholding; it may only
///     be paired with `fixed` or `symmetric`.
inline ParameterSet prox(const Regularizer& reg, double t, const ParameterSet& nu) {
  if (!(t > 0.0)) fail(ErrorKind::ConfigError, "prox step must be positive");
  ParameterSet out = nu;
  for (Target target : kAllTargets) select(out, target) = detail::prox_target(reg, target, t, select(nu, target));
  return out;
}

/// Euclidean projection onto the allowable set (penalties ignored).
inline ParameterSet project(const Regularizer& reg, const ParameterSet& nu) {
  Regularizer constraints_only{{}, reg.constraints};
  return prox(constraints_only, 1.0, nu);
}

}  // namespace kstune
