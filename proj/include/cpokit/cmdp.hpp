#pragma once

// Constrained MDPs: a tabular family with exact linear-system evaluation and
// a continuous 2-D point-circle task, both driven through one step interface.

#include "cpokit/policy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <variant>

namespace cpokit {

struct TabularCmdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  Mat transition;  ///< (n_states * n_actions) x n_states, row s * n_actions + a is T(.|s,a)
  Mat reward;      ///< n_states x n_actions
  Mat cost;        ///< n_states x n_actions
  double gamma = 0.9;
  Vec mu;
  double h = 0.0;
  std::size_t horizon = 100;

  void validate() const;
};

/// Point mass commanded by a velocity u (clipped to ||u|| <= u_max),
/// rewarded for circling the origin at `radius` and charged unit cost while
/// |x| > x_lim. Episodes start on the circle near its top or bottom point
/// (equal odds), at an angle uniform within `start_spread` radians.
struct PointCircleCmdp {
  double dt = 0.05;
  std::size_t horizon = 50;
  double radius = 1.0;
  double x_lim = 0.8;
  double u_max = 0.5;
  double gamma = 0.995;
  double h = 5.0;
  double start_spread = 0.2;

  void validate() const;
};

using CmdpSpec = std::variant<TabularCmdp, PointCircleCmdp>;

double discount(const CmdpSpec& spec);
double threshold(const CmdpSpec& spec);
std::size_t horizon(const CmdpSpec& spec);
void validate(const CmdpSpec& spec);

/// Policy family matching the spec (tabular softmax or Gaussian MLP with the given hidden sizes).
PolicyFamily default_family(const CmdpSpec& spec, const std::vector<std::size_t>& hidden = {8});

/// 8-state corridor. Action 0 moves left, 1 moves right (with probability
/// `slip` the move goes the other way). Moving right pays 1; occupying one
/// of the last two states costs 1 per step.
TabularCmdp chain_cmdp(double h = 0.5, double slip = 0.0, double gamma = 0.9, std::size_t horizon = 100);

/// Random dense CMDP with Dirichlet(1) transitions and uniform rewards/costs in [0,1).
TabularCmdp random_tabular_cmdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                                double gamma = 0.9);

nlohmann::json to_json(const CmdpSpec& spec);
/// Strict parse: unknown or missing fields are errors.
CmdpSpec cmdp_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Exact tabular evaluation

struct TabularEvaluation {
  Vec v_r, v_c;
  Mat q_r, q_c;
  Mat adv_r, adv_c;
  Vec d_pi;
  double j_r = 0.0;
  double j_c = 0.0;
};

TabularEvaluation evaluate_exact(const TabularCmdp& spec, const PolicyParams& p);

/// Exact gradient of J w.r.t. the softmax logits given an evaluation's
/// advantages and state distribution: d(s) pi(a|s) A(s,a) / (1 - gamma).
Vec exact_gradient(const TabularCmdp& spec, const PolicyParams& p, const Mat& adv, const Vec& d_pi);

/// |J_R(new) - J_R(old) - E_{d_new, pi_new}[A_old] / (1 - gamma)|.
double performance_identity_check(const TabularCmdp& spec, const PolicyParams& p_old, const PolicyParams& p_new);

/// Expected undiscounted cost summed over the first `horizon` steps.
double expected_undiscounted_cost(const TabularCmdp& spec, const PolicyParams& p);

/// max_s |sum_a pi_new(a|s) adv(s,a)|.
double max_expected_advantage(const PolicyParams& p_new, const Mat& adv);

// ---------------------------------------------------------------------------
// Simulation

struct EnvState {
  State obs;
  std::size_t t = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
};

class InvalidAction : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

EnvState reset(const CmdpSpec& spec, std::mt19937_64& rng);
StepResult step(const CmdpSpec& spec, const EnvState& state, const Action& action, std::mt19937_64& rng);

/// Unit cost indicator of the point-circle task at a position.
double point_circle_cost(const PointCircleCmdp& spec, const Vec& pos);

}  // namespace cpokit
