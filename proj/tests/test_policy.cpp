#include "cpokit/oracle.hpp"
#include "cpokit/policy.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cpokit;

TEST_CASE("parameter counts") {
  CHECK(param_count(TabularSoftmax{8, 2}) == 16);
  CHECK(param_count(GaussianMlp{{8}, 2, 2}) == 8 * 2 + 8 + 2 * 8 + 2 + 2);
  CHECK(param_count(GaussianMlp{{4, 3}, 2, 1}) == 4 * 2 + 4 + 3 * 4 + 3 + 1 * 3 + 1 + 1);
}

TEST_CASE("initialization is seeded and bounded") {
  const PolicyFamily fam = GaussianMlp{{8}, 2, 2};
  const PolicyParams a = init_policy(fam, 7), b = init_policy(fam, 7), c = init_policy(fam, 8);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != c.theta);
  CHECK(a.theta.cwiseAbs().maxCoeff() <= 0.1);
  PolicyParams bad = a;
  bad.theta.conservativeResize(3);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("tabular softmax probabilities and log-probabilities") {
  PolicyParams p{Vec::Zero(6), TabularSoftmax{2, 3}};
  p.theta << 0.0, 1.0, 2.0, -1.0, 0.0, 0.0;
  const Vec pr = action_probs(p, 0);
  CHECK(pr.sum() == doctest::Approx(1.0));
  CHECK(pr[2] / pr[1] == doctest::Approx(std::exp(1.0)));
  CHECK(log_prob(p, State{std::size_t{1}}, Action{std::size_t{0}}) == doctest::Approx(std::log(std::exp(-1.0) / (std::exp(-1.0) + 2.0))));
  CHECK(policy_table(p).rows() == 2);
  CHECK_THROWS(log_prob(p, State{std::size_t{5}}, Action{std::size_t{0}}));
}

TEST_CASE("score function matches finite differences") {
  std::mt19937_64 rng(1);
  const std::vector<PolicyParams> policies{init_policy(TabularSoftmax{4, 3}, 1, 1.0),
                                           init_policy(GaussianMlp{{8}, 2, 2}, 2, 0.5),
                                           init_policy(GaussianMlp{{3, 5}, 3, 1}, 3, 0.5)};
  for (const auto& p : policies) {
    for (int k = 0; k < 5; ++k) {
      const State s = std::holds_alternative<TabularSoftmax>(p.family)
                          ? State{static_cast<std::size_t>(k % 4)}
                          : State{Vec(testutil::randn(std::get<GaussianMlp>(p.family).state_dim, rng))};
      const Action a = sample(p, s, rng);
      const Vec fd = oracle::fd_gradient([&](const Vec& th) { return log_prob(PolicyParams{th, p.family}, s, a); },
                                         p.theta, 1e-5);
      CHECK((grad_log_prob(p, s, a) - fd).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("sampling frequencies follow the tabular distribution") {
  PolicyParams p{(Vec(2) << 0.0, std::log(3.0)).finished(), TabularSoftmax{1, 2}};
  std::mt19937_64 rng(4);
  int ones = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ones += std::get<std::size_t>(sample(p, State{std::size_t{0}}, rng)) == 1;
  CHECK(static_cast<double>(ones) / n == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("Gaussian KL has the closed form of diagonal Gaussians") {
  const PolicyParams old = init_policy(GaussianMlp{{8}, 2, 2}, 5, 0.3);
  PolicyParams next = old;
  const Eigen::Index n = old.theta.size();
  next.theta[n - 2] += 0.3;
  next.theta[n - 1] -= 0.2;
  const std::vector<State> states{State{Vec(Vec::Zero(2))}, State{Vec(Vec::Ones(2))}};
  double want = 0.0;
  for (double d : {0.3, -0.2}) want += -d + 0.5 * std::exp(2.0 * d) - 0.5;
  CHECK(mean_kl(next, old, states) == doctest::Approx(want).epsilon(1e-10));
  CHECK(mean_kl(old, old, states) == doctest::Approx(0.0));
  CHECK(gaussian_log_std(next).size() == 2);
}

TEST_CASE("Fisher matrix, products and the tabular closed form") {
  const PolicyParams p = init_policy(TabularSoftmax{3, 2}, 3, 1.0);
  const std::vector<State> states{State{std::size_t{0}}, State{std::size_t{1}}, State{std::size_t{2}}};
  const Mat f = fisher_matrix(p, states);
  CHECK((f - tabular_fisher(p, Vec::Constant(3, 1.0 / 3.0))).norm() <= 1e-12);
  std::mt19937_64 rng(2);
  const Vec v = testutil::randn(6, rng);
  CHECK((fisher_vector_product(p, states, v, 0.1) - (f * v + 0.1 * v)).norm() <= 1e-12);
  const FisherEstimate est = estimate_fisher(p, states, 1e-3);
  CHECK(est.sample_count == 3);
  CHECK((est.op(v) - (f * v + 1e-3 * v)).norm() <= 1e-12);
  const Mat fd = oracle::fd_hessian([&](const Vec& th) { return mean_kl(PolicyParams{th, p.family}, p, states); },
                                    p.theta, 1e-4);
  CHECK((fd - f).norm() <= 1e-5 * f.norm());
}

TEST_CASE("weighted and max KL on tabular policies") {
  const PolicyParams a = init_policy(TabularSoftmax{2, 2}, 1, 1.0);
  const PolicyParams b = init_policy(TabularSoftmax{2, 2}, 2, 1.0);
  const std::vector<State> states{State{std::size_t{0}}, State{std::size_t{1}}};
  CHECK(weighted_mean_kl(b, a, Vec::Constant(2, 0.5)) == doctest::Approx(mean_kl(b, a, states)));
  CHECK(max_kl(b, a) >= mean_kl(b, a, states));
}
