#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "kstune/prox.hpp"
#include "support/prox_cases.hpp"

using namespace kstune;

namespace {

ParameterSet params_2x2() {
  return {Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Ones(1, 2), Matrix::Ones(1, 1)};
}

ParameterSet scalar(double a) {
  return {Matrix::Constant(1, 1, a), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
}

double distance(const ParameterSet& a, const ParameterSet& b) { return (a.to_vector() - b.to_vector()).norm(); }

}  // namespace

TEST_CASE("quadratic deviation vanishes at the nominal value") {
  const ParameterSet P = params_2x2();
  const Regularizer reg{{{Target::A, QuadDeviation{P.A, 3.0}}}, {}};
  REQUIRE(eval_r(reg, P) == 0.0);
}

TEST_CASE("off-diagonal penalty sums squared off-diagonal entries") {
  ParameterSet P = params_2x2();
  P.Wisqrt << 1, 2, 3, 1;
  const Regularizer reg{{{Target::Wisqrt, OffdiagQuad{1.0}}}, {}};
  REQUIRE(eval_r(reg, P) == 13.0);
}

TEST_CASE("a violated constraint makes r infinite") {
  ParameterSet P = params_2x2();
  P.A(0, 1) = -0.1;
  const Regularizer reg{{}, {{Target::A, Nonneg{}}}};
  REQUIRE(eval_r(reg, P) == std::numeric_limits<double>::infinity());
  REQUIRE_FALSE(in_allowable_set(reg, P));
}

TEST_CASE("closed forms on scalar examples") {
  SECTION("quadratic deviation") {
    const Regularizer reg{{{Target::A, QuadDeviation{Matrix::Zero(1, 1), 1.0}}}, {}};
    REQUIRE(prox(reg, 0.5, scalar(2.0)).A(0, 0) == 1.0);
  }
  SECTION("box") {
    const Regularizer reg{{}, {{Target::A, Box{Matrix::Zero(1, 1), 0.1}}}};
    REQUIRE(prox(reg, 1.0, scalar(0.5)).A(0, 0) == 0.1);
  }
  SECTION("nuclear norm") {
    ParameterSet nu = params_2x2();
    nu.A << 3, 0, 0, 1;
    const Regularizer reg{{{Target::A, Nuclear{0.5}}}, {}};
    const Matrix x = prox(reg, 2.0, nu).A;
    const Vector s = Eigen::JacobiSVD<Matrix>(x).singularValues();
    REQUIRE(s[0] == Catch::Approx(2.0).epsilon(1e-14));
    REQUIRE(std::abs(s[1]) <= 1e-14);
  }
}

TEST_CASE("off-diagonal shrinkage leaves the diagonal alone") {
  ParameterSet nu = params_2x2();
  nu.Wisqrt << 4, 2, -2, 5;
  const Regularizer reg{{{Target::Wisqrt, OffdiagQuad{1.5}}}, {}};
  const Matrix x = prox(reg, 1.0, nu).Wisqrt;
  REQUIRE(x(0, 0) == 4.0);
  REQUIRE(x(1, 1) == 5.0);
  REQUIRE(x(0, 1) == Catch::Approx(2.0 / 4.0));
  REQUIRE(x(1, 0) == Catch::Approx(-2.0 / 4.0));
}

TEST_CASE("diagonal nonnegativity zeroes off-diagonals and clips the diagonal") {
  ParameterSet nu = params_2x2();
  nu.Visqrt = Matrix(1, 1);
  nu.Visqrt << -3;
  nu.Wisqrt << 4, 2, -2, -5;
  const Regularizer reg{{}, {{Target::Wisqrt, DiagonalNonneg{}}, {Target::Visqrt, DiagonalNonneg{}}}};
  const ParameterSet x = project(reg, nu);
  REQUIRE(x.Wisqrt == (Matrix(2, 2) << 4, 0, 0, 0).finished());
  REQUIRE(x.Visqrt(0, 0) == 0.0);
}

TEST_CASE("nuclear norm with an entrywise constraint is refused") {
  const Regularizer reg{{{Target::A, Nuclear{1.0}}}, {{Target::A, Nonneg{}}}};
  try {
    prox(reg, 1.0, params_2x2());
    FAIL();
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::NonSeparableCombination);
  }
  const Regularizer mixed{{{Target::A, Nuclear{1.0}}, {Target::A, OffdiagQuad{1.0}}}, {}};
  REQUIRE_THROWS_AS(prox(mixed, 1.0, params_2x2()), Error);
}

TEST_CASE("regularizer validation") {
  const ParameterSet P = params_2x2();
  REQUIRE_THROWS_AS(validate(Regularizer{{}, {{Target::A, Nonneg{}}, {Target::A, Symmetric{}}}}), Error);
  REQUIRE_THROWS_AS(validate(Regularizer{{{Target::A, OffdiagQuad{-1.0}}}, {}}), Error);
  REQUIRE_THROWS_AS(validate(Regularizer{{}, {{Target::A, Box{P.A, 0.0}}}}), Error);
  REQUIRE_NOTHROW(validate(Regularizer{{{Target::A, OffdiagQuad{1.0}}}, {{Target::A, Box{P.A, 1.0}}}}));
}

TEST_CASE("prox agrees with a numerical minimizer") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto n = static_cast<Index>(1 + rng.below(3));
    const auto p = static_cast<Index>(1 + rng.below(3));
    const testing::ProxCase pc = testing::random_prox_case(rng, n, p);
    const ParameterSet x = prox(pc.reg, pc.t, pc.nu);
    for (Target target : kAllTargets) {
      INFO("seed " << seed << " target " << to_string(target));
      REQUIRE(testing::prox_error(pc, x, target) <= 1e-8);
    }
  }
}

TEST_CASE("prox lands in the allowable set and is nonexpansive") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const testing::ProxCase pc = testing::random_prox_case(rng, 3, 2);
    const ParameterSet a = prox(pc.reg, pc.t, pc.nu);
    REQUIRE(std::isfinite(eval_r(pc.reg, a)));
    ParameterSet nu2 = pc.nu;
    nu2.A += testing::gaussian(rng, 3, 3);
    nu2.C += testing::gaussian(rng, 2, 3);
    nu2.Visqrt += testing::gaussian(rng, 2, 2);
    const ParameterSet b = prox(pc.reg, pc.t, nu2);
    REQUIRE(distance(a, b) <= distance(pc.nu, nu2) * (1.0 + 1e-12));
  }
}

TEST_CASE("small steps approach the projection") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(2000 + seed);
    const testing::ProxCase pc = testing::random_prox_case(rng, 2, 2);
    REQUIRE(distance(prox(pc.reg, 1e-12, pc.nu), project(pc.reg, pc.nu)) <= 1e-9);
  }
}

TEST_CASE("a minimizer of r inside the allowable set is a fixed point") {
  ParameterSet nu = params_2x2();
  nu.A << 0.5, 0.2, 0.1, 0.9;
  nu.Wisqrt << 2, 0, 0, 3;
  const Regularizer reg{{{Target::A, QuadDeviation{nu.A, 2.0}}, {Target::Wisqrt, OffdiagQuad{1.0}}},
                        {{Target::A, Nonneg{}}, {Target::Wisqrt, Symmetric{}}, {Target::C, Fixed{nu.C}}}};
  REQUIRE(prox(reg, 0.7, nu) == nu);
}

TEST_CASE("the nuclear certificate rejects a perturbed answer") {
  ParameterSet nu = params_2x2();
  nu.A << 3, 1, -1, 2;
  const Regularizer reg{{{Target::A, Nuclear{0.5}}}, {}};
  const Matrix x = prox(reg, 1.0, nu).A;
  REQUIRE(oracle::nuclear_error_bound(reg, 1.0, nu, Target::A, x) <= 1e-12);
  Matrix off = x;
  off(0, 1) += 1e-4;
  REQUIRE(oracle::nuclear_error_bound(reg, 1.0, nu, Target::A, off) >= 1e-5);
}
