#pragma once

// Comparison update rules: TRPO, CPO (with infeasible recovery and optional
// backtracking line search), PDO with dual ascent, and FPO.

#include "cpokit/subproblem.hpp"

#include <functional>
#include <optional>
#include <string>

namespace cpokit {

struct DualState {
  double lambda = 0.0;
  double beta = 0.0;  ///< dual learning rate; required in configs, no principled default
};

struct LineSearchConfig {
  bool enabled = false;
  double backtrack_ratio = 0.8;
  int max_backtracks = 10;

  void validate() const;
};

Vec trpo_update(const UpdateInputs& inp);

enum class CpoCase {
  Unconstrained,  ///< trust-region step already satisfies the constraint
  BothActive,     ///< trust region and constraint active together
  Recovery,       ///< b > sqrt(2 delta a'H^{-1}a): pure cost-decrease step
};

struct CpoResult {
  Vec theta_next;
  CpoCase kind = CpoCase::Unconstrained;
  double lambda = 0.0;  ///< trust-region multiplier
  double nu = 0.0;      ///< cost multiplier
  int backtracks = 0;
};

/// `kl_eval(theta)` estimates mean KL to the current policy; `cost_eval(theta)`
/// estimates J_C(theta) - h. Both are only called when line search is on.
CpoResult cpo_step(const UpdateInputs& inp, const LineSearchConfig& ls,
                   const std::function<double(const Vec&)>& kl_eval,
                   const std::function<double(const Vec&)>& cost_eval);

Vec cpo_update(const UpdateInputs& inp, const LineSearchConfig& ls,
               const std::function<double(const Vec&)>& kl_eval,
               const std::function<double(const Vec&)>& cost_eval);

struct PenaltyStep {
  Vec theta_next;
  bool skipped = false;
  std::string warning;
};

/// Trust-region step along g - lambda * a. A degenerate mixed gradient leaves
/// theta unchanged and sets `skipped` with a warning.
PenaltyStep fpo_step(const UpdateInputs& inp, double lambda_fixed);

Vec fpo_update(const UpdateInputs& inp, double lambda_fixed);

struct PdoResult {
  PenaltyStep step;
  DualState dual;
};

/// Step with the current multiplier, then lambda <- max(0, lambda + beta (jc - h)).
PdoResult pdo_update(const UpdateInputs& inp, const DualState& dual, double jc, double h);

}  // namespace cpokit
