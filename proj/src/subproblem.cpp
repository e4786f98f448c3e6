#include "cpokit/subproblem.hpp"

#include "cpokit/log.hpp"

#include <cmath>

namespace cpokit {

const char* to_string(ProjectionMetric m) { return m == ProjectionMetric::KL ? "kl" : "l2"; }

void UpdateInputs::validate() const {
  const auto n = static_cast<Eigen::Index>(fisher.dim());
  if (theta.size() != n || g.size() != n || a.size() != n)
    throw std::invalid_argument("UpdateInputs: theta, g, a and fisher dimensions differ");
  if (!(delta > 0.0)) throw std::invalid_argument("UpdateInputs: delta must be positive");
  if (!std::isfinite(b)) throw std::invalid_argument("UpdateInputs: b must be finite");
}

RewardStep reward_improvement(const UpdateInputs& inp) {
  inp.validate();
  RewardStep step;
  step.solve = conjugate_gradient(inp.fisher, inp.g, inp.cg);
  step.quad_form = inp.g.dot(step.solve.x);
  if (!(step.quad_form > kQuadraticFloor))
    throw DegenerateGradient("degenerate reward gradient: g'H^{-1}g = " + std::to_string(step.quad_form));
  step.eta = std::sqrt(2.0 * inp.delta / step.quad_form);
  step.theta_mid = inp.theta + step.eta * step.solve.x;
  return step;
}

Vec reward_improvement_step(const UpdateInputs& inp) { return reward_improvement(inp).theta_mid; }

Projection project_halfspace(const Vec& point, const Vec& anchor, const Vec& a, double b, ProjectionMetric metric,
                             const SpdOperator& fisher, const CgOptions& cg) {
  if (point.size() != a.size() || anchor.size() != a.size())
    throw std::invalid_argument("project_halfspace: dimension mismatch");
  Projection out;
  const double violation = a.dot(point - anchor) + b;
  if (violation <= 0.0) {
    out.theta = point;
    return out;
  }

  Vec dir;
  if (metric == ProjectionMetric::KL) {
    const CgResult solve = conjugate_gradient(fisher, a, cg);
    dir = solve.x;
    out.cg_residual = solve.relative_residual;
  } else {
    dir = a;
  }
  const double quad = a.dot(dir);
  if (!(quad > kQuadraticFloor)) {
    logger()->warn("projection skipped: a'L^{{-1}}a = {:.3e} with violation {:.3e}", quad, violation);
    throw UnprojectableConstraint("unprojectable constraint: a'L^{-1}a = " + std::to_string(quad) +
                                  " with positive violation " + std::to_string(violation));
  }
  out.multiplier = violation / quad;
  out.theta = point - out.multiplier * dir;
  return out;
}

Vec projection_step(const Vec& theta_mid, const UpdateInputs& inp, ProjectionMetric metric) {
  return project_halfspace(theta_mid, inp.theta, inp.a, inp.b, metric, inp.fisher, inp.cg).theta;
}

UpdateResult pcpo_update(const UpdateInputs& inp, ProjectionMetric metric) {
  const RewardStep step = reward_improvement(inp);
  const Projection proj = project_halfspace(step.theta_mid, inp.theta, inp.a, inp.b, metric, inp.fisher, inp.cg);

  UpdateResult res;
  res.theta_mid = step.theta_mid;
  res.theta_next = proj.theta;
  res.eta = step.eta;
  res.lagrange_cost = proj.multiplier;
  res.projection_active = proj.multiplier > 0.0;
  res.reward_cg_residual = step.solve.relative_residual;
  res.cost_cg_residual = proj.cg_residual;
  return res;
}

Vec alternating_projections(const Vec& theta_mid, const std::vector<LinearConstraint>& constraints,
                            const UpdateInputs& inp, ProjectionMetric metric, int sweeps) {
  if (constraints.empty()) throw std::invalid_argument("alternating_projections: need at least one constraint");
  if (sweeps < 1) throw std::invalid_argument("alternating_projections: sweeps must be >= 1");

  auto all_hold = [&](const Vec& x) {
    for (const auto& c : constraints)
      if (c.a.dot(x - inp.theta) + c.b > 1e-8) return false;
    return true;
  };

  Vec x = theta_mid;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    if (all_hold(x)) break;
    for (const auto& c : constraints) x = project_halfspace(x, inp.theta, c.a, c.b, metric, inp.fisher, inp.cg).theta;
  }
  return x;
}

bool variational_inequality_check(const Vec& theta, const Vec& theta_star, const std::vector<Vec>& probes,
                                  const SpdOperator& l) {
  const Vec lhs = l.apply(theta - theta_star);
  for (const auto& p : probes)
    if (lhs.dot(p - theta_star) > 1e-8) return false;
  return true;
}

}  // namespace cpokit
