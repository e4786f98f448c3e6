#pragma once

// Differentiable stochastic policies: a tabular softmax and a diagonal
// Gaussian whose mean is a small tanh MLP and whose log-std is a free,
// state-independent parameter vector.

#include "cpokit/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

namespace cpokit {

using State = std::variant<std::size_t, Vec>;
using Action = std::variant<std::size_t, Vec>;

struct TabularSoftmax {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
};

struct GaussianMlp {
  std::vector<std::size_t> hidden{8};
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
};

using PolicyFamily = std::variant<TabularSoftmax, GaussianMlp>;

std::size_t param_count(const PolicyFamily& family);

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter layout. Tabular: logits theta[s * n_actions + a]. Gaussian: for
/// each layer W (out x in, row-major) then b, then log_std (action_dim).
struct PolicyParams {
  Vec theta;
  PolicyFamily family;

  void validate() const;
};

/// theta ~ uniform(-scale, scale) from a generator seeded with `seed`.
PolicyParams init_policy(const PolicyFamily& family, std::uint64_t seed, double scale = 0.1);

double log_prob(const PolicyParams& p, const State& s, const Action& a);
Vec grad_log_prob(const PolicyParams& p, const State& s, const Action& a);
Action sample(const PolicyParams& p, const State& s, std::mt19937_64& rng);

/// Tabular action distribution at state s.
Vec action_probs(const PolicyParams& p, std::size_t s);

/// Full tabular policy matrix pi(a|s), n_states x n_actions.
Mat policy_table(const PolicyParams& p);

/// Gaussian mean for state s.
Vec gaussian_mean(const PolicyParams& p, const Vec& s);
Vec gaussian_log_std(const PolicyParams& p);

/// Average over `states` of KL(pi_new(.|s) || pi_old(.|s)) in closed form.
double mean_kl(const PolicyParams& p_new, const PolicyParams& p_old, const std::vector<State>& states);

/// Tabular only: sum_s w(s) KL(pi_new(.|s) || pi_old(.|s)).
double weighted_mean_kl(const PolicyParams& p_new, const PolicyParams& p_old, const Vec& weights);

/// max_s KL over all tabular states.
double max_kl(const PolicyParams& p_new, const PolicyParams& p_old);

/// Dense Hessian of mean_kl at p_new = p (the average Fisher), without damping.
Mat fisher_matrix(const PolicyParams& p, const std::vector<State>& states);

/// Tabular only: sum_s w(s) (diag(pi_s) - pi_s pi_s') on the logit blocks.
Mat tabular_fisher(const PolicyParams& p, const Vec& weights);

/// (H + damping I) v with H the average Fisher over `states`.
Vec fisher_vector_product(const PolicyParams& p, const std::vector<State>& states, const Vec& v, double damping);

struct FisherEstimate {
  SpdOperator op = SpdOperator::identity(1);
  std::size_t sample_count = 0;
  double damping = 0.0;
};

FisherEstimate estimate_fisher(const PolicyParams& p, const std::vector<State>& states, double damping = 1e-8);

}  // namespace cpokit
