#pragma once

// Closed-form two-step update: a trust-region reward step followed by a
// projection onto the linearized cost half-space, under either the Fisher
// (KL) metric or the Euclidean (L2) metric.

#include "cpokit/linalg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cpokit {

/// Both quadratic forms g'H^{-1}g and a'L^{-1}a are treated as zero below this.
inline constexpr double kQuadraticFloor = 1e-12;

enum class ProjectionMetric { KL, L2 };

const char* to_string(ProjectionMetric m);

struct UpdateInputs {
  Vec theta;
  Vec g;  ///< reward gradient
  Vec a;  ///< cost gradient
  double b = 0.0;  ///< constraint violation J_C - h
  SpdOperator fisher;
  double delta = 1e-4;
  CgOptions cg{};

  /// Throws std::invalid_argument on dimension mismatch or delta <= 0.
  void validate() const;
};

class UpdateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// g'H^{-1}g is below kQuadraticFloor; the reward step is undefined.
class DegenerateGradient : public UpdateError {
public:
  using UpdateError::UpdateError;
};

/// The constraint is violated but a'L^{-1}a is below kQuadraticFloor.
class UnprojectableConstraint : public UpdateError {
public:
  using UpdateError::UpdateError;
};

struct RewardStep {
  Vec theta_mid;
  double eta = 0.0;
  double quad_form = 0.0;  ///< g'H^{-1}g
  CgResult solve;
};

struct Projection {
  Vec theta;
  double multiplier = 0.0;  ///< max(0, violation / a'L^{-1}a)
  double cg_residual = 0.0;
};

struct UpdateResult {
  Vec theta_next;
  Vec theta_mid;
  double eta = 0.0;
  bool projection_active = false;
  double lagrange_cost = 0.0;
  double reward_cg_residual = 0.0;
  double cost_cg_residual = 0.0;
};

/// Full reward step with its diagnostics.
RewardStep reward_improvement(const UpdateInputs& inp);

/// theta + sqrt(2 delta / g'H^{-1}g) H^{-1} g.
Vec reward_improvement_step(const UpdateInputs& inp);

/// Projects `point` onto {x : a'(x - anchor) + b <= 0} in the metric L
/// (L = fisher for KL, identity for L2). Returns `point` untouched when the
/// constraint already holds there.
Projection project_halfspace(const Vec& point, const Vec& anchor, const Vec& a, double b, ProjectionMetric metric,
                             const SpdOperator& fisher, const CgOptions& cg);

/// Projection of theta_mid onto the linearized constraint of `inp`.
Vec projection_step(const Vec& theta_mid, const UpdateInputs& inp, ProjectionMetric metric);

/// Reward step followed by projection step.
UpdateResult pcpo_update(const UpdateInputs& inp, ProjectionMetric metric);

struct LinearConstraint {
  Vec a;
  double b = 0.0;
};

/// Cyclic projections onto each linearized constraint (anchored at
/// inp.theta), stopping once all hold within 1e-8 or after `sweeps` passes.
Vec alternating_projections(const Vec& theta_mid, const std::vector<LinearConstraint>& constraints,
                            const UpdateInputs& inp, ProjectionMetric metric, int sweeps = 10);

/// Certificate that theta_star is the L-projection of theta onto a convex set
/// represented by the probes: (theta - theta_star)' L (probe - theta_star) <= 1e-8.
bool variational_inequality_check(const Vec& theta, const Vec& theta_star, const std::vector<Vec>& probes,
                                  const SpdOperator& l);

}  // namespace cpokit
