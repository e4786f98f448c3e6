#include "cpokit/linalg.hpp"
#include "cpokit/oracle.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <limits>

using namespace cpokit;

TEST_CASE("dense operator applies matrix plus damping") {
  std::mt19937_64 rng(1);
  const Mat m = testutil::random_spd(5, 0.5, 2.0, rng);
  const SpdOperator op = SpdOperator::from_matrix(m, 0.25);
  const Vec v = testutil::randn(5, rng);
  CHECK((op(v) - (m * v + 0.25 * v)).norm() < 1e-12);
  CHECK((op.to_dense() - (m + 0.25 * Mat::Identity(5, 5))).norm() < 1e-12);
  CHECK(op.with_damping(0.0).damping() == 0.0);
  CHECK(op.dim() == 5);
}

TEST_CASE("operator is symmetric on random probes") {
  std::mt19937_64 rng(2);
  const SpdOperator op = SpdOperator::from_matrix(testutil::random_spd(8, 0.1, 4.0, rng), 1e-8);
  for (int i = 0; i < 10; ++i) {
    const Vec x = testutil::randn(8, rng), y = testutil::randn(8, rng);
    CHECK(std::abs(x.dot(op(y)) - op(x).dot(y)) <= 1e-8 * std::max(1.0, std::abs(x.dot(op(y)))));
    CHECK(x.dot(op(x)) >= 0.0);
  }
}

TEST_CASE("conjugate gradient solves SPD systems within n iterations") {
  std::mt19937_64 rng(3);
  for (Eigen::Index n : {1, 3, 10, 32}) {
    const Mat m = testutil::random_spd(n, 0.5, 5.0, rng);
    const Vec rhs = testutil::randn(n, rng);
    const CgResult r = conjugate_gradient(SpdOperator::from_matrix(m), rhs, CgOptions{static_cast<int>(n), 1e-10});
    CHECK(r.converged);
    CHECK(r.iterations <= n);
    CHECK((m * r.x - rhs).norm() / rhs.norm() <= 1e-10);
    CHECK((r.x - oracle::dense_solve(m, rhs)).norm() <= 1e-8 * r.x.norm());
  }
}

TEST_CASE("conjugate gradient edge cases") {
  const SpdOperator eye = SpdOperator::identity(3);
  const CgResult zero = conjugate_gradient(eye, Vec::Zero(3));
  CHECK(zero.converged);
  CHECK(zero.x.norm() == 0.0);
  CHECK_THROWS_AS(conjugate_gradient(eye, Vec::Ones(4)), std::invalid_argument);
  CHECK_THROWS_AS(conjugate_gradient(eye, Vec::Ones(3), CgOptions{0, 1e-10}), std::invalid_argument);
  Vec bad = Vec::Ones(3);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(conjugate_gradient(eye, bad), NumericalBreakdown);
  const SpdOperator neg = SpdOperator::from_matrix(-Mat::Identity(3, 3));
  CHECK_THROWS_AS(conjugate_gradient(neg, Vec::Ones(3)), NumericalBreakdown);
}

TEST_CASE("conjugate gradient reports non-convergence when iterations run out") {
  std::mt19937_64 rng(4);
  const Mat m = testutil::random_spd(20, 0.01, 10.0, rng);
  const CgResult r = conjugate_gradient(SpdOperator::from_matrix(m), testutil::randn(20, rng), CgOptions{2, 1e-12});
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 2);
}

TEST_CASE("solution norm is non-increasing in damping") {
  std::mt19937_64 rng(5);
  const Mat m = testutil::random_spd(6, 0.1, 3.0, rng);
  const Vec rhs = testutil::randn(6, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-8, 1e-4, 1e-2, 1e-1, 1.0}) {
    const double norm = conjugate_gradient(SpdOperator::from_matrix(m, eps), rhs, CgOptions{30, 1e-13}).x.norm();
    CHECK(norm <= prev + 1e-12);
    prev = norm;
  }
}

TEST_CASE("spectrum estimate matches the dense eigensolver") {
  std::mt19937_64 rng(6);
  const Mat m = testutil::random_spd(12, 0.2, 8.0, rng);
  const auto [lo, hi] = oracle::extremal_eigenvalues(m);
  const ConditionReport cr = estimate_spectrum(SpdOperator::from_matrix(m), 5000, 1e-12);
  CHECK(cr.sigma_max == doctest::Approx(hi).epsilon(1e-2));
  CHECK(cr.sigma_min == doctest::Approx(lo).epsilon(1e-2));
  CHECK(cr.condition_number == doctest::Approx(hi / lo).epsilon(2e-2));
}

TEST_CASE("all_finite") {
  Vec v = Vec::Ones(3);
  CHECK(all_finite(v));
  v[2] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(v));
}
