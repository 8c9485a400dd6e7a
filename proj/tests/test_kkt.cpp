#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "kstune/datagen.hpp"
#include "kstune/kkt.hpp"
#include "support/generators.hpp"

using namespace kstune;

namespace {

Vector dense_solve(const SparseColMatrix& M, const Vector& b) { return Matrix(M).fullPivLu().solve(b); }

SparseProblem order18(std::uint64_t seed) {
  Rng rng(seed);
  const ParameterSet P = testing::random_params(rng, 2, 1);
  return assemble(P, MeasurementSet(testing::gaussian(rng, 3, 1)), EntrySet{{0, 0}, {2, 0}});
}

}  // namespace

TEST_CASE("KKT order counts the three blocks") {
  const ParameterSet P{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  const SparseProblem tiny = assemble(P, MeasurementSet(Matrix::Constant(1, 1, 5.0)), EntrySet{{0, 0}});
  REQUIRE(build_kkt(tiny).order() == 4);
  REQUIRE(build_kkt(order18(1)).order() == 18);
}

TEST_CASE("order-4 system matches a dense solve") {
  const ParameterSet P{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  const SparseProblem prob = assemble(P, MeasurementSet(Matrix::Constant(1, 1, 5.0)), EntrySet{{0, 0}});
  const KktSystem sys = build_kkt(prob);
  const KktFactorization fact = factorize(sys);
  REQUIRE(fact.reg() == 0.0);
  const Vector b = (Vector(4) << 0.3, -1.0, 2.0, 5.0).finished();
  REQUIRE((solve(fact, b) - dense_solve(sys.M, b)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("zero rhs gives zero solution") {
  const KktFactorization fact = factorize(build_kkt(order18(2)));
  REQUIRE(solve(fact, Vector::Zero(18)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("forward rhs satisfies the constraints") {
  const SparseProblem prob = order18(3);
  const KktSystem sys = build_kkt(prob);
  const KktFactorization fact = factorize(sys);
  Vector b = Vector::Zero(18);
  b.tail(2) = prob.c;
  const Vector u = solve(fact, b);
  REQUIRE((prob.B * u.head(9) - prob.c).lpNorm<Eigen::Infinity>() <= 1e-8);
  REQUIRE(relative_residual(sys.M, u, b) <= kKktResidualTol);
}

TEST_CASE("adjoint rhs matches a dense solve on the order-18 instance") {
  const SparseProblem prob = order18(4);
  const KktSystem sys = build_kkt(prob);
  const KktFactorization fact = factorize(sys);
  Rng rng(4);
  const Vector g = testing::gaussian(rng, 18, 1);
  REQUIRE((solve(fact, -g) - dense_solve(sys.M, -g)).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("empty constrained set gives the zero solution") {
  Rng rng(5);
  const ParameterSet P = testing::random_params(rng, 2, 2);
  const SparseProblem prob = assemble(P, MeasurementSet(testing::gaussian(rng, 4, 2)), EntrySet{});
  const KktSystem sys = build_kkt(prob);
  REQUIRE(sys.order() == 16 + 14);
  // The homogeneous problem has an n-dimensional null space; regularization
  // selects the minimum-norm answer.
  const KktFactorization fact = factorize(sys);
  REQUIRE(fact.reg() > 0.0);
  REQUIRE(solve(fact, Vector::Zero(sys.order())).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("simulated vehicle-style system needs no regularization") {
  SimSpec spec;
  spec.kind = DoubleIntegrator{0.1};
  spec.T = 100;
  spec.W = Matrix::Identity(9, 9);
  spec.V = Matrix::Identity(8, 8);
  spec.seed = 11;
  const Simulation sim = simulate(spec);
  const SparseProblem prob = assemble(sim.true_params, sim.meas, sim.meas.known());
  const KktSystem sys = build_kkt(prob);
  const KktFactorization fact = factorize(sys);
  REQUIRE(fact.reg() == 0.0);
  Vector b = Vector::Zero(sys.order());
  b.tail(prob.c.size()) = prob.c;
  REQUIRE(relative_residual(sys.M, solve(fact, b), b) <= kKktResidualTol);
}

TEST_CASE("duplicated constraint rows are repaired by regularization") {
  SparseProblem prob = order18(6);
  // Stack row 0 of B twice: B loses full row rank and M is singular.
  const Index N = prob.blocks.num_vars();
  SparseRowMatrix B(3, N);
  std::vector<Eigen::Triplet<double, int>> trips;
  for (int r = 0; r < 2; ++r) {
    for (SparseRowMatrix::InnerIterator it(prob.B, r); it; ++it) trips.emplace_back(r, static_cast<int>(it.col()), 1.0);
  }
  for (SparseRowMatrix::InnerIterator it(prob.B, 0); it; ++it) trips.emplace_back(2, static_cast<int>(it.col()), 1.0);
  B.setFromTriplets(trips.begin(), trips.end());
  prob.B = B;
  prob.c = (Vector(3) << prob.c[0], prob.c[1], prob.c[0]).finished();
  const KktSystem sys = build_kkt(prob);
  const KktFactorization fact = factorize(sys);
  REQUIRE(fact.reg() > 0.0);
  Vector b = Vector::Zero(sys.order());
  b.tail(3) = prob.c;
  const Vector u = solve(fact, b);
  REQUIRE(relative_residual(fact.matrix(), u, b) <= kKktResidualTol);
}

TEST_CASE("refactoring new values matches a fresh factorization") {
  Rng rng(7);
  const ParameterSet P = testing::random_params(rng, 2, 2);
  const MeasurementSet meas(testing::gaussian(rng, 5, 2));
  const EntrySet constrained = meas.known();
  SparseProblem prob = assemble(P, meas, constrained);
  KktFactorization fact = factorize(build_kkt(prob));

  ParameterSet P2 = P;
  P2.A += testing::gaussian(rng, 2, 2, 0.1);
  update_values(prob, P2);
  const KktSystem sys2 = build_kkt(prob);
  Vector b = Vector::Zero(sys2.order());
  b.tail(prob.c.size()) = prob.c;
  const Vector fresh = solve(factorize(sys2), b);
  fact = refactor_values(std::move(fact), sys2);
  REQUIRE((solve(fact, b) - fresh).lpNorm<Eigen::Infinity>() <= 1e-12);

  // Same values again: same answer.
  fact = refactor_values(std::move(fact), sys2);
  REQUIRE((solve(fact, b) - fresh).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("refactoring a different horizon is a pattern mismatch") {
  Rng rng(8);
  const ParameterSet P = testing::random_params(rng, 2, 2);
  const SparseProblem a = assemble(P, MeasurementSet(testing::gaussian(rng, 5, 2)), EntrySet{{0, 0}, {1, 1}});
  const SparseProblem b = assemble(P, MeasurementSet(testing::gaussian(rng, 6, 2)), EntrySet{{0, 0}, {1, 1}});
  KktFactorization fact = factorize(build_kkt(a));
  try {
    fact = refactor_values(std::move(fact), build_kkt(b));
    FAIL();
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::PatternMismatch);
  }
}

TEST_CASE("rhs of the wrong length is rejected") {
  const KktFactorization fact = factorize(build_kkt(order18(9)));
  try {
    solve(fact, Vector::Zero(17));
    FAIL();
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::LengthMismatch);
  }
}

TEST_CASE("residual bound holds on random instances") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const auto n = static_cast<Index>(1 + rng.below(4));
    const auto p = static_cast<Index>(1 + rng.below(4));
    const auto T = static_cast<Index>(2 * n + rng.below(20));
    const testing::Instance inst = testing::random_instance(seed, T, n, p);
    const SparseProblem prob = assemble(inst.params, inst.meas, inst.constrained);
    const KktSystem sys = build_kkt(prob);
    const KktFactorization fact = factorize(sys);
    const Vector b = testing::gaussian(rng, sys.order(), 1, 10.0);
    REQUIRE(relative_residual(sys.M, solve(fact, b), b) <= kKktResidualTol);
  }
}
