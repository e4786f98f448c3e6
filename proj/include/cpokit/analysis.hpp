#pragma once

// Worst-case bound reports for tabular updates, the objective-change
// inequalities for both projections, and the 2-D non-convex toy problem.

#include "cpokit/cmdp.hpp"
#include "cpokit/subproblem.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cpokit {

struct BoundReport {
  double eps_r = 0.0;
  double eps_c = 0.0;
  double b_plus = 0.0;
  double alpha_kl = 0.0;  ///< 1 / (2 a'H^{-1}a)
  double delta = 0.0;
  double reward_lower_bound = 0.0;
  double cost_upper_bound = 0.0;
  double realized_dr = 0.0;  ///< J_R(new) - J_R(old)
  double realized_jc = 0.0;  ///< J_C(new)
  double jc_old = 0.0;
  double h = 0.0;
  double kl = 0.0;  ///< d_pi(old)-weighted mean KL(new || old)

  bool reward_holds() const { return realized_dr >= reward_lower_bound; }
  bool cost_holds() const { return realized_jc <= cost_upper_bound; }
};

/// Radius factor sqrt(2 (delta + b_plus^2 alpha)) gamma / (1 - gamma)^2 times eps.
double worst_case_term(double delta, double b_plus, double alpha_kl, double gamma, double eps);

/// Exact bound report for one tabular update. Throws std::invalid_argument
/// if a'H^{-1}a is below the quadratic floor while b_plus > 0.
BoundReport bound_report(const TabularCmdp& spec, const PolicyParams& p_old, const PolicyParams& p_new, double delta,
                         const Vec& a, const SpdOperator& fisher);

void write_bounds_csv(std::ostream& os, const std::vector<BoundReport>& rows);

// ---------------------------------------------------------------------------
// Objective-change inequalities. f is minimized, g = grad f.

struct SmoothObjective {
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
  double lipschitz = 0.0;  ///< L, bound on ||Hess f||_2 over the region of interest
};

struct ObjectiveChangeStep {
  double f_next = 0.0;
  double rhs = 0.0;     ///< f(theta_k) + quadratic term of the stated inequality
  double slack = 0.0;   ///< rhs - f_next, nonnegative when the inequality holds
  double eta = 0.0;
  bool premise = false; ///< singular-value condition of the stated inequality
  bool holds = false;
  /// Condition-number chain of the L2 case: cond(H) < 2||g||^2 / (L^2 delta).
  double condition_number = 0.0;
  double condition_limit = 0.0;
};

std::vector<ObjectiveChangeStep> objective_change_check(const SmoothObjective& obj, const Mat& h,
                                                          const std::vector<Vec>& iterates, ProjectionMetric metric,
                                                          double delta);

/// Collinearity certificate at a boundary point, f minimized with gradient g:
/// KL needs g = -alpha a, L2 needs H^{-1} g = -alpha a (alpha >= 0), each
/// accepted when the cosine is at least 1 - 1e-6.
bool stationary_point_certificate(const Vec& x, const Vec& g, const Vec& a, const SpdOperator& h,
                                  ProjectionMetric metric);

/// Cosine between the two vectors compared by stationary_point_certificate.
double stationary_cosine(const Vec& g, const Vec& a, const SpdOperator& h, ProjectionMetric metric);

// ---------------------------------------------------------------------------
// Toy problem: maximize x' diag(y) x subject to normal' x <= rhs.

struct Toy2dConfig {
  Vec y = (Vec(2) << 5.0, -1.0).finished();
  Vec constraint_normal = Vec::Ones(2);
  double constraint_rhs = -1.0;
  Vec x0 = (Vec(2) << 0.5, -2.0).finished();
  double delta = 0.5;
  int iterations = 10000;
  /// Metric H of the reward step (and of the KL projection).
  Mat metric = Vec((Vec(2) << 10.0, 2.0).finished()).asDiagonal();
  /// Stop once ||x|| exceeds this.
  double escape_norm = 1e8;

  void validate() const;
};

struct Toy2dResult {
  std::vector<Vec> path;
  std::vector<std::pair<Vec, Vec>> field;  ///< (grid point, combined update direction)
};

/// Maximized objective and its gradient.
double toy2d_objective(const Toy2dConfig& cfg, const Vec& x);
Vec toy2d_gradient(const Toy2dConfig& cfg, const Vec& x);

/// One PCPO step x -> x_next; returns x_next - x (zero where the gradient vanishes).
Vec toy2d_direction(const Toy2dConfig& cfg, ProjectionMetric metric, const Vec& x);

Toy2dResult toy2d_run(const Toy2dConfig& cfg, ProjectionMetric metric);

using LabeledPath = std::pair<std::string, std::vector<Vec>>;
using LabeledField = std::pair<std::string, std::vector<std::pair<Vec, Vec>>>;

/// Columns iter,x1,x2,metric.
void write_toy2d_path_csv(std::ostream& os, const std::vector<LabeledPath>& paths);
/// Columns x1,x2,d1,d2,metric over the [-1,1] x [-2,0] grid at 0.25 spacing.
void write_toy2d_field_csv(std::ostream& os, const std::vector<LabeledField>& fields);

}  // namespace cpokit
