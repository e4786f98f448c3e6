#include "cpokit/baselines.hpp"

#include "cpokit/log.hpp"

#include <algorithm>
#include <cmath>

namespace cpokit {

void LineSearchConfig::validate() const {
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0))
    throw std::invalid_argument("LineSearchConfig: backtrack_ratio must lie in (0, 1)");
  if (max_backtracks < 1) throw std::invalid_argument("LineSearchConfig: max_backtracks must be >= 1");
}

Vec trpo_update(const UpdateInputs& inp) { return reward_improvement_step(inp); }

CpoResult cpo_step(const UpdateInputs& inp, const LineSearchConfig& ls,
                   const std::function<double(const Vec&)>& kl_eval,
                   const std::function<double(const Vec&)>& cost_eval) {
  inp.validate();
  if (ls.enabled) ls.validate();

  const CgResult hg = conjugate_gradient(inp.fisher, inp.g, inp.cg);
  const double q = inp.g.dot(hg.x);
  if (!(q > kQuadraticFloor))
    throw DegenerateGradient("degenerate reward gradient: g'H^{-1}g = " + std::to_string(q));

  const double b = inp.b;
  const double delta = inp.delta;
  CpoResult res;
  Vec step = std::sqrt(2.0 * delta / q) * hg.x;
  res.lambda = std::sqrt(q / (2.0 * delta));

  if (inp.a.dot(step) + b > 0.0) {
    const CgResult ha = conjugate_gradient(inp.fisher, inp.a, inp.cg);
    const double s = inp.a.dot(ha.x);
    if (!(s > kQuadraticFloor))
      throw UnprojectableConstraint("unprojectable constraint: a'H^{-1}a = " + std::to_string(s));
    const double r = inp.g.dot(ha.x);
    const double slack = 2.0 * delta - b * b / s;

    if (b > 0.0 && slack <= 0.0) {
      res.kind = CpoCase::Recovery;
      res.lambda = 0.0;
      res.nu = 0.0;
      step = -std::sqrt(2.0 * delta / s) * ha.x;
    } else if (slack > 0.0) {
      res.kind = CpoCase::BothActive;
      const double a_coef = std::max(q - r * r / s, 0.0);
      const double lambda = std::sqrt(a_coef / slack);
      if (lambda * lambda <= kQuadraticFloor * q) {
        // g parallel to a: every boundary point of the hyperplane slice is optimal;
        // take the one closest to theta in the H metric.
        res.lambda = 0.0;
        res.nu = r / s;
        step = -(b / s) * ha.x;
      } else {
        res.lambda = lambda;
        res.nu = std::max(0.0, (r + lambda * b) / s);
        step = (hg.x - res.nu * ha.x) / lambda;
      }
    }
    // slack <= 0 with b <= 0 means the whole trust region is feasible, so the
    // unconstrained step stands (reachable only through rounding).
  }

  res.theta_next = inp.theta + step;
  if (!ls.enabled) return res;

  const double cost_target = std::max(0.0, b);
  double scale = 1.0;
  for (int k = 0; k <= ls.max_backtracks; ++k) {
    const Vec cand = inp.theta + scale * step;
    if (kl_eval(cand) <= delta && cost_eval(cand) <= cost_target) {
      res.theta_next = cand;
      res.backtracks = k;
      return res;
    }
    scale *= ls.backtrack_ratio;
  }
  logger()->info("cpo line search exhausted {} backtracks, keeping current parameters", ls.max_backtracks);
  res.theta_next = inp.theta;
  res.backtracks = ls.max_backtracks;
  return res;
}

Vec cpo_update(const UpdateInputs& inp, const LineSearchConfig& ls,
               const std::function<double(const Vec&)>& kl_eval,
               const std::function<double(const Vec&)>& cost_eval) {
  return cpo_step(inp, ls, kl_eval, cost_eval).theta_next;
}

PenaltyStep fpo_step(const UpdateInputs& inp, double lambda_fixed) {
  if (!(lambda_fixed >= 0.0)) throw std::invalid_argument("penalty multiplier must be nonnegative");
  UpdateInputs mixed = inp;
  mixed.g = inp.g - lambda_fixed * inp.a;
  PenaltyStep out;
  try {
    out.theta_next = reward_improvement_step(mixed);
  } catch (const DegenerateGradient& e) {
    out.theta_next = inp.theta;
    out.skipped = true;
    out.warning = std::string("mixed gradient g - lambda a is degenerate: ") + e.what();
    logger()->warn("{}", out.warning);
  }
  return out;
}

Vec fpo_update(const UpdateInputs& inp, double lambda_fixed) { return fpo_step(inp, lambda_fixed).theta_next; }

PdoResult pdo_update(const UpdateInputs& inp, const DualState& dual, double jc, double h) {
  if (!(dual.lambda >= 0.0)) throw std::invalid_argument("pdo_update: dual lambda must be nonnegative");
  PdoResult out;
  out.step = fpo_step(inp, dual.lambda);
  out.dual = dual;
  out.dual.lambda = std::max(0.0, dual.lambda + dual.beta * (jc - h));
  return out;
}

}  // namespace cpokit
