#include "cpokit/cmdp.hpp"
#include "cpokit/oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace cpokit;

namespace {

// Two states, one action: 0 -> 1 -> 1 with reward 1 in state 0 and cost 1 in state 1.
TabularCmdp two_state(double gamma) {
  TabularCmdp t;
  t.n_states = 2;
  t.n_actions = 1;
  t.transition = (Mat(2, 2) << 0.0, 1.0, 0.0, 1.0).finished();
  t.reward = (Mat(2, 1) << 1.0, 0.0).finished();
  t.cost = (Mat(2, 1) << 0.0, 1.0).finished();
  t.gamma = gamma;
  t.mu = (Vec(2) << 1.0, 0.0).finished();
  t.h = 1.0;
  t.horizon = 10;
  t.validate();
  return t;
}

}  // namespace

TEST_CASE("deterministic two-state chain has hand-computed values") {
  const TabularCmdp t = two_state(0.9);
  const PolicyParams p{Vec::Zero(2), TabularSoftmax{2, 1}};
  const TabularEvaluation ev = evaluate_exact(t, p);
  CHECK(ev.j_r == doctest::Approx(1.0));
  CHECK(ev.j_c == doctest::Approx(0.9 / (1.0 - 0.9)));
  CHECK(ev.v_c[1] == doctest::Approx(10.0));
  CHECK(ev.d_pi[0] == doctest::Approx(0.1));
  CHECK(ev.d_pi.sum() == doctest::Approx(1.0));
  CHECK(expected_undiscounted_cost(t, p) == doctest::Approx(9.0));
}

TEST_CASE("chain layout") {
  const TabularCmdp c = chain_cmdp();
  CHECK(c.n_states == 8);
  CHECK(c.transition.rowwise().sum().isApprox(Vec::Ones(16)));
  CHECK(c.transition(2 * 3 + 1, 4) == 1.0);  // right from 3
  CHECK(c.transition(2 * 3 + 0, 2) == 1.0);  // left from 3
  CHECK(c.transition(2 * 7 + 1, 7) == 1.0);  // right wall
  CHECK(c.reward(0, 1) == 1.0);
  CHECK(c.reward(0, 0) == 0.0);
  CHECK(c.cost.row(6).sum() == 2.0);
  CHECK(c.cost.row(5).sum() == 0.0);
  CHECK(chain_cmdp(0.5, 0.25).transition(2 * 3 + 1, 2) == 0.25);
  CHECK_THROWS_AS(chain_cmdp(0.5, 1.5), std::invalid_argument);
}

TEST_CASE("exact evaluation satisfies the Bellman equations") {
  const TabularCmdp t = random_tabular_cmdp(5, 3, 9);
  const PolicyParams p = init_policy(TabularSoftmax{5, 3}, 4, 1.0);
  const TabularEvaluation ev = evaluate_exact(t, p);
  const Mat pi = policy_table(p);
  for (Eigen::Index s = 0; s < 5; ++s) {
    double v = 0.0;
    for (Eigen::Index a = 0; a < 3; ++a) {
      const double q = t.reward(s, a) + t.gamma * t.transition.row(s * 3 + a).dot(ev.v_r);
      CHECK(ev.q_r(s, a) == doctest::Approx(q));
      v += pi(s, a) * q;
    }
    CHECK(ev.v_r[s] == doctest::Approx(v));
  }
  CHECK(ev.j_r == doctest::Approx(t.mu.dot(ev.v_r)));
}

TEST_CASE("exact gradient matches finite differences of J") {
  const TabularCmdp t = random_tabular_cmdp(4, 2, 3);
  const PolicyParams p = init_policy(TabularSoftmax{4, 2}, 1, 1.0);
  const TabularEvaluation ev = evaluate_exact(t, p);
  const Vec fd_r = oracle::fd_gradient([&](const Vec& th) { return evaluate_exact(t, PolicyParams{th, p.family}).j_r; },
                                       p.theta, 1e-6);
  const Vec fd_c = oracle::fd_gradient([&](const Vec& th) { return evaluate_exact(t, PolicyParams{th, p.family}).j_c; },
                                       p.theta, 1e-6);
  CHECK((exact_gradient(t, p, ev.adv_r, ev.d_pi) - fd_r).norm() <= 1e-7);
  CHECK((exact_gradient(t, p, ev.adv_c, ev.d_pi) - fd_c).norm() <= 1e-7);
}

TEST_CASE("performance difference identity") {
  const TabularCmdp t = random_tabular_cmdp(6, 3, 11, 0.95);
  for (std::uint64_t i = 0; i < 5; ++i)
    CHECK(performance_identity_check(t, init_policy(TabularSoftmax{6, 3}, i, 2.0),
                                     init_policy(TabularSoftmax{6, 3}, i + 100, 2.0)) <= 1e-8);
}

TEST_CASE("sampled returns agree with exact evaluation") {
  const TabularCmdp t = chain_cmdp(0.5, 0.1);
  const PolicyParams p = init_policy(TabularSoftmax{8, 2}, 2, 1.0);
  const double exact = evaluate_exact(t, p).j_r;
  std::mt19937_64 rng(5);
  double sum = 0.0, sq = 0.0;
  const int episodes = 4000;
  for (int e = 0; e < episodes; ++e) {
    EnvState st = reset(t, rng);
    double ret = 0.0, disc = 1.0;
    for (int k = 0; k < 100; ++k) {
      const StepResult r = step(t, st, sample(p, st.obs, rng), rng);
      ret += disc * r.reward;
      disc *= t.gamma;
      st = r.next;
    }
    sum += ret;
    sq += ret * ret;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sq / episodes - mean * mean) / episodes);
  // The 100-step truncation removes gamma^100 of the tail, far below one standard error.
  CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("tabular step validates inputs and ends at the horizon") {
  const TabularCmdp t = two_state(0.5);
  std::mt19937_64 rng(1);
  EnvState st = reset(t, rng);
  CHECK(std::get<std::size_t>(st.obs) == 0);
  CHECK_THROWS_AS(step(t, st, Action{std::size_t{3}}, rng), InvalidAction);
  CHECK_THROWS_AS(step(t, st, Action{Vec(Vec::Zero(2))}, rng), InvalidAction);
  StepResult r{};
  for (int k = 0; k < 10; ++k) {
    r = step(t, st, Action{std::size_t{0}}, rng);
    st = r.next;
  }
  CHECK(r.done);
}

TEST_CASE("point-circle dynamics") {
  const PointCircleCmdp c;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const EnvState st = reset(c, rng);
    const Vec& p = std::get<Vec>(st.obs);
    CHECK(p.norm() == doctest::Approx(c.radius));
    CHECK(point_circle_cost(c, p) == 0.0);
  }
  const EnvState st{State{Vec((Vec(2) << 1.0, 0.0).finished())}, 0};
  const StepResult r = step(c, st, Action{Vec((Vec(2) << 0.0, 3.0).finished())}, rng);
  CHECK(r.reward == doctest::Approx(0.5));  // clipped to u_max, tangential at the circle
  CHECK(r.cost == 1.0);
  CHECK(std::get<Vec>(r.next.obs)[1] == doctest::Approx(c.dt * c.u_max));
  CHECK_THROWS_AS(step(c, st, Action{std::size_t{0}}, rng), InvalidAction);
  // Cost is non-increasing in x_lim at fixed positions.
  for (double x : {0.5, 0.79, 0.81, 1.2}) {
    PointCircleCmdp tighter = c, looser = c;
    tighter.x_lim = 0.5;
    looser.x_lim = 1.0;
    const Vec p = (Vec(2) << x, 0.0).finished();
    CHECK(point_circle_cost(tighter, p) >= point_circle_cost(c, p));
    CHECK(point_circle_cost(c, p) >= point_circle_cost(looser, p));
  }
}

TEST_CASE("JSON round trip and strict parsing") {
  for (const CmdpSpec& spec : {CmdpSpec{chain_cmdp(0.7, 0.1)}, CmdpSpec{PointCircleCmdp{}}}) {
    const nlohmann::json j = to_json(spec);
    CHECK(to_json(cmdp_from_json(j)) == j);
    nlohmann::json extra = j;
    extra["surprise"] = 1;
    CHECK_THROWS_AS(cmdp_from_json(extra), std::invalid_argument);
    nlohmann::json missing = j;
    missing.erase("gamma");
    CHECK_THROWS_AS(cmdp_from_json(missing), std::invalid_argument);
  }
  nlohmann::json bad = to_json(CmdpSpec{chain_cmdp()});
  bad["transition"][0][0][0] = 0.3;  // row no longer sums to one
  CHECK_THROWS_AS(cmdp_from_json(bad), std::invalid_argument);
  CHECK_THROWS_AS(cmdp_from_json(nlohmann::json{{"kind", "maze"}}), std::invalid_argument);
}
