#pragma once

// On-policy rollouts and the sample estimates of g, a, b and the Fisher
// operator consumed by the update rules.

#include "cpokit/cmdp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace cpokit {

struct Episode {
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<double> costs;
  std::vector<std::uint8_t> dones;

  std::size_t size() const noexcept { return rewards.size(); }
};

struct TrajectoryBatch {
  std::vector<Episode> episodes;
  std::size_t total_steps = 0;
  std::uint64_t seed = 0;
};

struct GaeConfig {
  double lambda_r = 0.95;
  double lambda_c = 1.0;
  double gamma = 0.99;

  void validate() const;
};

enum class Channel { Reward, Cost };

/// Baseline value as a function of the state and the time step within the episode.
using ValueFn = std::function<double(const State&, std::size_t)>;

/// Whole episodes until at least batch_steps steps were taken. Deterministic in `seed`.
TrajectoryBatch collect(const CmdpSpec& spec, const PolicyParams& p, std::size_t batch_steps, std::uint64_t seed);

/// Per-episode GAE advantages. The value after a terminal step is zero.
std::vector<Vec> gae_advantages(const TrajectoryBatch& batch, const ValueFn& values, const GaeConfig& cfg,
                                Channel channel);

/// Discounted reward-to-go (or cost-to-go) per episode.
std::vector<Vec> discounted_to_go(const TrajectoryBatch& batch, double gamma, Channel channel);

/// Ridge regression of discounted returns-to-go on fixed state/time features.
class LinearBaseline {
public:
  explicit LinearBaseline(const CmdpSpec& spec, double ridge = 1e-6);

  void fit(const TrajectoryBatch& batch, Channel channel);
  double operator()(const State& s, std::size_t t) const;
  ValueFn as_function() const;

  Vec features(const State& s, std::size_t t) const;

private:
  CmdpSpec spec_;
  double ridge_;
  Vec weights_;
};

/// Exact tabular values (infinite-horizon) for a policy.
ValueFn exact_tabular_baseline(const TabularCmdp& spec, const PolicyParams& p, Channel channel);

struct EstimationOptions {
  bool standardize_reward = true;
  std::size_t fisher_max_states = 512;
  double damping = 1e-8;
};

struct EmpiricalInputs {
  Vec g;
  Vec a;
  double b = 0.0;
  FisherEstimate fisher;
  double jr_hat = 0.0;
  double jc_hat = 0.0;      ///< discounted, drives b
  double jc_undisc = 0.0;   ///< mean per-episode undiscounted cost sum
  std::vector<State> fisher_states;
  std::vector<Vec> adv_c;   ///< per-episode cost advantages (unstandardized)
};

/// g = mean over episodes of sum_t gamma^t A_R,t grad log pi (likewise a with
/// A_C), so both are gradients of discounted returns in the units of b = jc_hat - h.
EmpiricalInputs build_update_inputs(const TrajectoryBatch& batch, const PolicyParams& p, const GaeConfig& cfg,
                                    const CmdpSpec& spec, const ValueFn& baseline_r, const ValueFn& baseline_c,
                                    const EstimationOptions& opts = {});

/// First-order surrogate of J_C(p_new) - h from a batch drawn under p_old:
/// b + mean_ep sum_t gamma^t (pi_new/pi_old - 1) A_C,t.
double surrogate_cost(const TrajectoryBatch& batch, const PolicyParams& p_old, const PolicyParams& p_new,
                      const std::vector<Vec>& adv_c, double gamma, double b);

}  // namespace cpokit
