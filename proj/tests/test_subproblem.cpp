#include "cpokit/oracle.hpp"
#include "cpokit/subproblem.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace cpokit;

namespace {

UpdateInputs make_inputs(const Mat& h, const Vec& theta, const Vec& g, const Vec& a, double b, double delta) {
  return UpdateInputs{theta, g, a, b, SpdOperator::from_matrix(h), delta,
                      CgOptions{static_cast<int>(theta.size()) + 5, 1e-14}};
}

}  // namespace

TEST_CASE("reward step saturates the trust region") {
  std::mt19937_64 rng(1);
  const Mat h = testutil::random_spd(6, 0.5, 3.0, rng);
  const UpdateInputs inp = make_inputs(h, Vec::Zero(6), testutil::randn(6, rng), Vec::Zero(6), -1.0, 0.02);
  const RewardStep rs = reward_improvement(inp);
  const Vec d = rs.theta_mid - inp.theta;
  CHECK(0.5 * d.dot(h * d) == doctest::Approx(0.02).epsilon(1e-9));
  CHECK(rs.eta == doctest::Approx(std::sqrt(2.0 * 0.02 / rs.quad_form)));
  CHECK((d - oracle::trust_region_step(h, inp.g, 0.02)).norm() <= 1e-8 * d.norm());
}

TEST_CASE("feasible midpoint leaves the projection inactive") {
  std::mt19937_64 rng(2);
  const Mat h = testutil::random_spd(4, 0.5, 3.0, rng);
  const UpdateInputs inp = make_inputs(h, Vec::Zero(4), testutil::randn(4, rng), testutil::randn(4, rng), -10.0, 1e-3);
  for (auto metric : {ProjectionMetric::KL, ProjectionMetric::L2}) {
    const UpdateResult r = pcpo_update(inp, metric);
    CHECK_FALSE(r.projection_active);
    CHECK(r.theta_next == r.theta_mid);
  }
}

TEST_CASE("active projection lands on the linearized boundary and matches the oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2 + trial;
    const Mat h = testutil::random_spd(n, 0.5, 3.0, rng);
    const Vec theta = testutil::randn(n, rng), g = testutil::randn(n, rng), a = testutil::randn(n, rng);
    const UpdateInputs inp = make_inputs(h, theta, g, a, 0.5, 1e-2);
    for (auto metric : {ProjectionMetric::KL, ProjectionMetric::L2}) {
      const UpdateResult r = pcpo_update(inp, metric);
      CHECK(r.projection_active);
      CHECK(std::abs(a.dot(r.theta_next - theta) + 0.5) <= 1e-9);
      const Mat l = metric == ProjectionMetric::KL ? h : Mat::Identity(n, n);
      const Vec want = oracle::two_stage_update(theta, g, a, 0.5, h, 1e-2, l);
      CHECK((r.theta_next - want).norm() <= 1e-7 * (want - theta).norm());
    }
  }
}

TEST_CASE("identity Fisher makes both projections agree") {
  std::mt19937_64 rng(4);
  const UpdateInputs inp = make_inputs(Mat::Identity(5, 5), Vec::Zero(5), testutil::randn(5, rng),
                                       testutil::randn(5, rng), 0.3, 1e-2);
  const Vec kl = pcpo_update(inp, ProjectionMetric::KL).theta_next;
  const Vec l2 = pcpo_update(inp, ProjectionMetric::L2).theta_next;
  CHECK((kl - l2).norm() <= 1e-12);
}

TEST_CASE("degenerate inputs raise typed errors") {
  const Mat h = Mat::Identity(3, 3);
  CHECK_THROWS_AS(pcpo_update(make_inputs(h, Vec::Zero(3), Vec::Zero(3), Vec::Ones(3), 0.1, 1e-2), ProjectionMetric::KL),
                  DegenerateGradient);
  CHECK_THROWS_AS(pcpo_update(make_inputs(h, Vec::Zero(3), Vec::Ones(3), Vec::Zero(3), 0.1, 1e-2), ProjectionMetric::L2),
                  UnprojectableConstraint);
  CHECK_THROWS_AS(make_inputs(h, Vec::Zero(2), Vec::Ones(3), Vec::Ones(3), 0.0, 1e-2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_inputs(h, Vec::Zero(3), Vec::Ones(3), Vec::Ones(3), 0.0, 0.0).validate(), std::invalid_argument);
}

TEST_CASE("alternating projections") {
  const UpdateInputs inp = make_inputs(Mat::Identity(2, 2), Vec::Zero(2), Vec::Ones(2), Vec::Ones(2), 0.0, 1e-2);
  SUBCASE("orthogonal half-spaces reach the corner in one sweep") {
    const Vec out = alternating_projections(Vec::Ones(2), {{(Vec(2) << 1, 0).finished(), 0.0},
                                                           {(Vec(2) << 0, 1).finished(), 0.0}},
                                            inp, ProjectionMetric::L2, 1);
    CHECK(out.norm() <= 1e-15);
  }
  SUBCASE("obtuse normals converge to the intersection projection") {
    const Vec x = (Vec(2) << 1.0, 2.0).finished();
    const Vec out = alternating_projections(x, {{(Vec(2) << 1, 0).finished(), 0.0},
                                                {(Vec(2) << -1, 1).finished(), 0.0}},
                                            inp, ProjectionMetric::L2, 50);
    CHECK(out.norm() <= 1e-6);
  }
}

TEST_CASE("variational inequality certificate") {
  const Vec a = (Vec(2) << 1.0, 0.0).finished();
  const Vec theta = (Vec(2) << 2.0, 1.0).finished();
  const Vec star = (Vec(2) << 0.0, 1.0).finished();
  const std::vector<Vec> probes{(Vec(2) << 0.0, -3.0).finished(), (Vec(2) << -1.0, 4.0).finished()};
  const SpdOperator eye = SpdOperator::identity(2);
  CHECK(variational_inequality_check(theta, star, probes, eye));
  CHECK_FALSE(variational_inequality_check(theta, (Vec(2) << 0.0, 1.5).finished(),
                                           {(Vec(2) << 0.0, 4.0).finished()},
                                           SpdOperator::from_matrix((Mat(2, 2) << 1, 0.5, 0.5, 1).finished())));
  CHECK(project_halfspace(theta, Vec::Zero(2), a, 0.0, ProjectionMetric::L2, eye, {}).theta.isApprox(star));
}
