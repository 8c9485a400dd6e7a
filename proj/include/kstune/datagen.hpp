#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "kstune/core.hpp"

namespace kstune {

/// Random A with IID N(0, 1/n) entries rescaled to the given spectral
/// radius, and C with IID N(0, 1) entries.
struct RandomSystem {
  Index n = 2;
  Index p = 2;
  double spectral_radius = 0.9;
};

/// Position / velocity / acceleration in 3-D with sample interval h.
/// Outputs are (position, acceleration, velocity x, velocity y), so n = 9,
/// p = 8.
struct DoubleIntegrator {
  double h = 0.01;
};

/// Population-flow style dynamics: nonnegative A close to the identity
/// whose columns sum to one, C = I.
struct MigrationLike {
  Index n = 4;
};

using SystemKind = std::variant<RandomSystem, DoubleIntegrator, MigrationLike>;

struct SimSpec {
  SystemKind kind = RandomSystem{};
  Index T = 100;
  Matrix W;  // process noise covariance, n x n, symmetric PSD
  Matrix V;  // sensor noise covariance, p x p, symmetric PSD
  std::uint64_t seed = 0;
  double known_frac = 1.0;
};

struct Simulation {
  ParameterSet true_params;
  Matrix true_states;  // T x n
  MeasurementSet meas;
};

inline Matrix double_integrator_dynamics(double h) {
  const Matrix I3 = Matrix::Identity(3, 3);
  Matrix A = Matrix::Identity(9, 9);
  A.block(0, 3, 3, 3) = h * I3;
  A.block(3, 6, 3, 3) = h * I3;
  return A;
}

inline Matrix double_integrator_output() {
  Matrix C = Matrix::Zero(8, 9);
  C.block(0, 0, 3, 3).setIdentity();  // position
  C.block(3, 6, 3, 3).setIdentity();  // acceleration
  C(6, 3) = 1.0;                      // velocity x
  C(7, 4) = 1.0;                      // velocity y
  return C;
}

inline Index state_dim(const SystemKind& kind) {
  return std::visit(
      [](const auto& k) -> Index {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, RandomSystem>) return k.n;
        else if constexpr (std::is_same_v<K, DoubleIntegrator>) return 9;
        else return k.n;
      },
      kind);
}

inline Index output_dim(const SystemKind& kind) {
  return std::visit(
      [](const auto& k) -> Index {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, RandomSystem>) return k.p;
        else if constexpr (std::is_same_v<K, DoubleIntegrator>) return 8;
        else return k.n;
      },
      kind);
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Matrix> checked_psd(const Matrix& S, std::string_view name) {
  if (S.rows() != S.cols()) fail(ErrorKind::DimensionMismatch, std::string(name) + " is not square");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorKind::NonPsdNoise, std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    fail(ErrorKind::NonPsdNoise, std::string(name) + " has a negative eigenvalue");
  }
  return eig;
}

// L with L L^T = S.
inline Matrix noise_factor(const Matrix& S, std::string_view name) {
  const auto eig = checked_psd(S, name);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  }
  return m;
}

}  // namespace detail

/// Symmetric S^{-1/2}. Singular covariances have no whitening factor; the
/// identity is returned in that case.
inline Matrix inverse_sqrt(const Matrix& S) {
  const auto eig = detail::checked_psd(S, "covariance");
  const Vector& lambda = eig.eigenvalues();
  if (lambda.size() == 0 || lambda.minCoeff() <= 1e-14 * std::max(1.0, lambda.maxCoeff())) {
    return Matrix::Identity(S.rows(), S.cols());
  }
  return eig.eigenvectors() * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

inline double spectral_radius(const Matrix& A) {
  return Eigen::EigenSolver<Matrix>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Draws a trajectory of x_{t+1} = A x_t + w_t, y_t = C x_t + v_t.
///
/// All randomness comes from one Rng(seed), consumed in this order: system
/// matrices (random kind: A column-major, then C; migration kind: the
/// off-diagonal flow weights), x_0 ~ N(0, I), w_0..w_{T-2}, v_0..v_{T-1},
/// then one uniform per (t, i) in lexicographic order deciding whether
/// that output is known.
inline Simulation simulate(const SimSpec& spec) {
  const Index n = state_dim(spec.kind);
  const Index p = output_dim(spec.kind);
  if (spec.T < 1) fail(ErrorKind::ConfigError, "T must be positive");
  if (n < 1 || p < 1) fail(ErrorKind::ConfigError, "system dimensions must be positive");
  if (!(spec.known_frac > 0.0 && spec.known_frac <= 1.0)) fail(ErrorKind::ConfigError, "known_frac must lie in (0, 1]");
  if (spec.W.rows() != n || spec.W.cols() != n) fail(ErrorKind::DimensionMismatch, "W must be n x n");
  if (spec.V.rows() != p || spec.V.cols() != p) fail(ErrorKind::DimensionMismatch, "V must be p x p");

  Rng rng(spec.seed);
  Matrix A;
  Matrix C;
  if (const auto* rs = std::get_if<RandomSystem>(&spec.kind)) {
    if (!(rs->spectral_radius > 0.0 && rs->spectral_radius <= 1.0)) {
      fail(ErrorKind::ConfigError, "spectral_radius must lie in (0, 1]");
    }
    A = detail::random_matrix(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n)));
    C = detail::random_matrix(rng, p, n, 1.0);
    const double rho = spectral_radius(A);
    if (rho > 0.0) A *= rs->spectral_radius / rho;
  } else if (const auto* di = std::get_if<DoubleIntegrator>(&spec.kind)) {
    if (!(di->h > 0.0)) fail(ErrorKind::ConfigError, "h must be positive");
    A = double_integrator_dynamics(di->h);
    C = double_integrator_output();
  } else {
    // Each column moves 2% of its mass to the other states.
    Matrix flow = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        if (i != j) flow(i, j) = rng.uniform();
      }
    }
    A = Matrix::Identity(n, n);
    if (n > 1) {
      for (Index j = 0; j < n; ++j) {
        const double total = flow.col(j).sum();
        if (total > 0.0) A.col(j) += 0.02 * (flow.col(j) / total - Vector::Unit(n, j));
      }
    }
    C = Matrix::Identity(n, n);
  }

  const Matrix LW = detail::noise_factor(spec.W, "W");
  const Matrix LV = detail::noise_factor(spec.V, "V");

  Simulation sim;
  sim.true_params = {A, inverse_sqrt(spec.W), C, inverse_sqrt(spec.V)};
  sim.true_states.resize(spec.T, n);

  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.normal();
  sim.true_states.row(0) = x.transpose();
  for (Index t = 0; t + 1 < spec.T; ++t) {
    Vector xi(n);
    for (Index i = 0; i < n; ++i) xi[i] = rng.normal();
    x = A * x + LW * xi;
    sim.true_states.row(t + 1) = x.transpose();
  }
  Matrix Y(spec.T, p);
  for (Index t = 0; t < spec.T; ++t) {
    Vector zeta(p);
    for (Index i = 0; i < p; ++i) zeta[i] = rng.normal();
    Y.row(t) = (C * sim.true_states.row(t).transpose() + LV * zeta).transpose();
  }
  for (Index t = 0; t < spec.T; ++t) {
    for (Index i = 0; i < p; ++i) {
      if (!(rng.uniform() < spec.known_frac)) Y(t, i) = MeasurementSet::missing();
    }
  }
  sim.meas = MeasurementSet(std::move(Y));
  return sim;
}

/// Keeps the listed channels only at t = 0, period, 2 period, ...; the
/// other channels are untouched. Models a slow sensor sampled on a fast grid.
inline MeasurementSet subsample_channels(const MeasurementSet& meas, const std::vector<Index>& channels,
                                         Index period) {
  if (period < 1) fail(ErrorKind::ConfigError, "period must be positive");
  Matrix Y = meas.values();
  for (Index ch : channels) {
    if (ch < 0 || ch >= meas.p()) fail(ErrorKind::IndexOutOfBounds, "channel " + std::to_string(ch));
    for (Index t = 0; t < meas.T(); ++t) {
      if (t % period != 0) Y(t, ch) = MeasurementSet::missing();
    }
  }
  return MeasurementSet(std::move(Y));
}

/// Wisqrt -> sqrt(gamma) Wisqrt, i.e. W -> W / gamma.
struct ScaleW {
  double gamma = 1.0;
};

/// Visqrt -> sqrt(gamma) Visqrt, i.e. V -> V / gamma.
struct ScaleV {
  double gamma = 1.0;
};

/// A -> A + sigma * N(0, 1) entrywise, drawn from Rng(seed) column-major.
struct PerturbA {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

using Misspecification = std::variant<ScaleW, ScaleV, PerturbA>;

inline ParameterSet misspecify(const ParameterSet& params, const Misspecification& kind) {
  ParameterSet out = params;
  if (const auto* sw = std::get_if<ScaleW>(&kind)) {
    if (!(sw->gamma > 0.0)) fail(ErrorKind::ConfigError, "gamma must be positive");
    out.Wisqrt *= std::sqrt(sw->gamma);
  } else if (const auto* sv = std::get_if<ScaleV>(&kind)) {
    if (!(sv->gamma > 0.0)) fail(ErrorKind::ConfigError, "gamma must be positive");
    out.Visqrt *= std::sqrt(sv->gamma);
  } else {
    const auto& pa = std::get<PerturbA>(kind);
    Rng rng(pa.seed);
    out.A += detail::random_matrix(rng, out.A.rows(), out.A.cols(), pa.sigma);
  }
  return out;
}

}  // namespace kstune
