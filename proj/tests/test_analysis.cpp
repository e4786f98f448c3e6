#include "cpokit/analysis.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace cpokit;

TEST_CASE("worst-case term matches its closed form") {
  const double v = worst_case_term(1e-2, 0.5, 2.0, 0.9, 0.3);
  CHECK(v == doctest::Approx(std::sqrt(2.0 * (1e-2 + 0.25 * 2.0)) * 0.9 * 0.3 / 0.01));
  CHECK(worst_case_term(1e-2, 0.0, 5.0, 0.9, 0.3) == doctest::Approx(std::sqrt(2e-2) * 0.9 * 0.3 / 0.01));
  CHECK(worst_case_term(1e-2, 0.5, 2.0, 0.9, 0.0) == 0.0);
}

TEST_CASE("bound report on a small tabular update") {
  // A loose threshold keeps the projection inactive so the step stays in the trust region.
  const TabularCmdp spec = chain_cmdp(10.0);
  const PolicyParams p = init_policy(TabularSoftmax{8, 2}, 1);
  const TabularEvaluation ev = evaluate_exact(spec, p);
  const Vec g = exact_gradient(spec, p, ev.adv_r, ev.d_pi);
  const Vec a = exact_gradient(spec, p, ev.adv_c, ev.d_pi);
  const SpdOperator fisher = SpdOperator::from_matrix(tabular_fisher(p, ev.d_pi), 1e-8);
  const double delta = 1e-4;
  UpdateInputs inp{p.theta, g, a, ev.j_c - spec.h, fisher, delta, CgOptions{40, 1e-12}};
  PolicyParams q = p;
  q.theta = pcpo_update(inp, ProjectionMetric::KL).theta_next;

  const BoundReport r = bound_report(spec, p, q, delta, a, fisher);
  CHECK(r.jc_old == doctest::Approx(ev.j_c));
  CHECK(r.b_plus == 0.0);
  CHECK(r.alpha_kl > 0.0);
  CHECK(r.kl <= 1.1 * delta);
  CHECK(r.reward_holds());
  CHECK(r.cost_holds());
  CHECK(r.cost_upper_bound >= spec.h);

  std::ostringstream os;
  write_bounds_csv(os, {r});
  CHECK(os.str().find("update,eps_r,eps_c,b_plus,alpha_kl,delta,reward_lower_bound,cost_upper_bound,realized_dr,"
                      "realized_jc,jc_old,h,kl,reward_holds,cost_holds\n") != std::string::npos);
}

TEST_CASE("objective-change inequality holds for small KL steps on a quadratic") {
  Mat q(2, 2);
  q << 2.0, 0.3, 0.3, 1.0;
  SmoothObjective obj;
  obj.f = [q](const Vec& x) { return 0.5 * x.dot(q * x); };
  obj.grad = [q](const Vec& x) -> Vec { return q * x; };
  obj.lipschitz = Eigen::SelfAdjointEigenSolver<Mat>(q).eigenvalues().maxCoeff();
  const Mat h = 4.0 * Mat::Identity(2, 2);
  const Vec a = (Vec(2) << 1.0, 0.0).finished();
  std::vector<Vec> iterates{(Vec(2) << 2.0, 1.0).finished()};
  for (int k = 0; k < 10; ++k) {
    const Vec& x = iterates.back();
    UpdateInputs inp{x, -obj.grad(x), a, a.dot(x) - 3.0, SpdOperator::from_matrix(h), 1e-3, CgOptions{10, 1e-14}};
    iterates.push_back(pcpo_update(inp, ProjectionMetric::KL).theta_next);
  }
  const auto steps = objective_change_check(obj, h, iterates, ProjectionMetric::KL, 1e-3);
  REQUIRE(steps.size() == 10);
  for (const auto& s : steps) {
    CHECK(s.premise);
    CHECK(s.holds);
    CHECK(s.slack >= 0.0);
    CHECK(s.f_next < obj.f(iterates.front()));
  }
  CHECK_THROWS_AS(objective_change_check(obj, Mat::Identity(2, 3), iterates, ProjectionMetric::KL, 1e-3),
                  std::invalid_argument);
}

TEST_CASE("stationary certificate recognizes collinear gradients") {
  const SpdOperator h = SpdOperator::from_matrix((Vec(2) << 4.0, 1.0).finished().asDiagonal());
  const Vec x = Vec::Zero(2);
  const Vec a = (Vec(2) << 1.0, 1.0).finished();
  CHECK(stationary_point_certificate(x, -2.0 * a, a, h, ProjectionMetric::KL));
  CHECK_FALSE(stationary_point_certificate(x, 2.0 * a, a, h, ProjectionMetric::KL));
  // H^{-1} g collinear with -a needs g = -alpha H a.
  const Vec g_l2 = -(Vec(2) << 4.0, 1.0).finished();
  CHECK(stationary_point_certificate(x, g_l2, a, h, ProjectionMetric::L2));
  CHECK_FALSE(stationary_point_certificate(x, g_l2, a, h, ProjectionMetric::KL));
  CHECK_THROWS_AS(stationary_cosine(Vec::Zero(2), a, h, ProjectionMetric::KL), std::invalid_argument);
}

TEST_CASE("toy problem gradient, steps and CSV layout") {
  const Toy2dConfig cfg;
  const Vec x = (Vec(2) << 0.3, -0.7).finished();
  const double e = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vec xp = x, xm = x;
    xp[i] += e;
    xm[i] -= e;
    CHECK(toy2d_gradient(cfg, x)[i] ==
          doctest::Approx((toy2d_objective(cfg, xp) - toy2d_objective(cfg, xm)) / (2 * e)).epsilon(1e-6));
  }
  CHECK(toy2d_objective(cfg, x) == doctest::Approx(5.0 * 0.09 - 0.49));

  Toy2dConfig shortrun = cfg;
  shortrun.iterations = 20;
  const Toy2dResult r = toy2d_run(shortrun, ProjectionMetric::KL);
  CHECK(r.path.size() >= 2);
  CHECK((r.path[1] - r.path[0] - toy2d_direction(cfg, ProjectionMetric::KL, r.path[0])).norm() <= 1e-12);
  for (std::size_t k = 1; k < r.path.size(); ++k)
    CHECK(cfg.constraint_normal.dot(r.path[k]) <= cfg.constraint_rhs + 1e-9);
  CHECK(r.field.size() == 9 * 9);

  std::ostringstream path_csv, field_csv;
  write_toy2d_path_csv(path_csv, {{"kl", r.path}});
  write_toy2d_field_csv(field_csv, {{"kl", r.field}});
  CHECK(path_csv.str().rfind("# schema=1\niter,x1,x2,metric\n0,", 0) == 0);
  CHECK(field_csv.str().rfind("# schema=1\nx1,x2,d1,d2,metric\n", 0) == 0);

  Toy2dConfig bad = cfg;
  bad.delta = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
