#include "cpokit/analysis.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace cpokit {

double worst_case_term(double delta, double b_plus, double alpha_kl, double gamma, double eps) {
  return std::sqrt(2.0 * (delta + b_plus * b_plus * alpha_kl)) * gamma * eps / ((1.0 - gamma) * (1.0 - gamma));
}

BoundReport bound_report(const TabularCmdp& spec, const PolicyParams& p_old, const PolicyParams& p_new, double delta,
                         const Vec& a, const SpdOperator& fisher) {
  const TabularEvaluation old_ev = evaluate_exact(spec, p_old);
  const TabularEvaluation new_ev = evaluate_exact(spec, p_new);
  BoundReport r;
  r.delta = delta;
  r.h = spec.h;
  r.jc_old = old_ev.j_c;
  r.eps_r = max_expected_advantage(p_new, old_ev.adv_r);
  r.eps_c = max_expected_advantage(p_new, old_ev.adv_c);
  r.b_plus = std::max(0.0, old_ev.j_c - spec.h);

  const CgResult solve =
      conjugate_gradient(fisher, a, CgOptions{static_cast<int>(fisher.dim()) + 10, 1e-12});
  const double s = a.dot(solve.x);
  if (s > kQuadraticFloor) {
    r.alpha_kl = 1.0 / (2.0 * s);
  } else if (r.b_plus > 0.0) {
    throw std::invalid_argument("bound_report: a'H^{-1}a vanishes with a violated constraint");
  }
  r.reward_lower_bound = -worst_case_term(delta, r.b_plus, r.alpha_kl, spec.gamma, r.eps_r);
  r.cost_upper_bound = spec.h + worst_case_term(delta, r.b_plus, r.alpha_kl, spec.gamma, r.eps_c);
  r.realized_dr = new_ev.j_r - old_ev.j_r;
  r.realized_jc = new_ev.j_c;
  r.kl = weighted_mean_kl(p_new, p_old, old_ev.d_pi);
  return r;
}

void write_bounds_csv(std::ostream& os, const std::vector<BoundReport>& rows) {
  os << "# schema=1\n";
  os << "update,eps_r,eps_c,b_plus,alpha_kl,delta,reward_lower_bound,cost_upper_bound,realized_dr,realized_jc,"
        "jc_old,h,kl,reward_holds,cost_holds\n";
  os.precision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << r.eps_r << ',' << r.eps_c << ',' << r.b_plus << ',' << r.alpha_kl << ',' << r.delta << ','
       << r.reward_lower_bound << ',' << r.cost_upper_bound << ',' << r.realized_dr << ',' << r.realized_jc << ','
       << r.jc_old << ',' << r.h << ',' << r.kl << ',' << (r.reward_holds() ? 1 : 0) << ','
       << (r.cost_holds() ? 1 : 0) << '\n';
  }
}

std::vector<ObjectiveChangeStep> objective_change_check(const SmoothObjective& obj, const Mat& h,
                                                          const std::vector<Vec>& iterates, ProjectionMetric metric,
                                                          double delta) {
  if (h.rows() != h.cols()) throw std::invalid_argument("objective_change_check: H must be square");
  const Eigen::SelfAdjointEigenSolver<Mat> eig(h);
  const double s_min = eig.eigenvalues().minCoeff();
  const double s_max = eig.eigenvalues().maxCoeff();
  const Eigen::LDLT<Mat> h_fact(h);
  const double l = obj.lipschitz;

  std::vector<ObjectiveChangeStep> out;
  for (std::size_t k = 0; k + 1 < iterates.size(); ++k) {
    const Vec& x = iterates[k];
    const Vec step = iterates[k + 1] - x;
    const Vec g = obj.grad(x);
    const double quad = g.dot(h_fact.solve(g));
    ObjectiveChangeStep s;
    s.eta = quad > 0.0 ? std::sqrt(2.0 * delta / quad) : std::numeric_limits<double>::infinity();
    s.f_next = obj.f(iterates[k + 1]);
    if (metric == ProjectionMetric::KL) {
      s.rhs = obj.f(x) - step.dot(h * step) / s.eta + 0.5 * l * step.squaredNorm();
      s.premise = s_min > l * s.eta / 2.0;
    } else {
      s.rhs = obj.f(x) + (0.5 * l - 1.0 / s.eta) * step.squaredNorm();
      s.premise = s_max <= 1.0;
    }
    s.slack = s.rhs - s.f_next;
    s.holds = s.slack >= -1e-12 * std::max(1.0, std::abs(s.rhs));
    s.condition_number = s_max / s_min;
    s.condition_limit = l > 0.0 ? 2.0 * g.squaredNorm() / (l * l * delta) : std::numeric_limits<double>::infinity();
    out.push_back(s);
  }
  return out;
}

double stationary_cosine(const Vec& g, const Vec& a, const SpdOperator& h, ProjectionMetric metric) {
  Vec lhs = g;
  if (metric == ProjectionMetric::L2)
    lhs = conjugate_gradient(h, g, CgOptions{static_cast<int>(h.dim()) + 10, 1e-13}).x;
  const double denom = lhs.norm() * a.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("stationary certificate undefined for zero vectors");
  return -lhs.dot(a) / denom;
}

bool stationary_point_certificate(const Vec& x, const Vec& g, const Vec& a, const SpdOperator& h,
                                  ProjectionMetric metric) {
  if (x.size() != g.size() || g.size() != a.size()) throw std::invalid_argument("certificate: dimension mismatch");
  return stationary_cosine(g, a, h, metric) >= 1.0 - 1e-6;
}

void Toy2dConfig::validate() const {
  if (y.size() != 2 || constraint_normal.size() != 2 || x0.size() != 2 || metric.rows() != 2 || metric.cols() != 2)
    throw std::invalid_argument("Toy2dConfig: all vectors must be 2-D and the metric 2x2");
  if (!(delta > 0.0) || iterations < 1) throw std::invalid_argument("Toy2dConfig: delta and iterations must be positive");
}

double toy2d_objective(const Toy2dConfig& cfg, const Vec& x) { return x.dot(cfg.y.cwiseProduct(x)); }

Vec toy2d_gradient(const Toy2dConfig& cfg, const Vec& x) { return 2.0 * cfg.y.cwiseProduct(x); }

Vec toy2d_direction(const Toy2dConfig& cfg, ProjectionMetric metric, const Vec& x) {
  UpdateInputs inp{x,
                   toy2d_gradient(cfg, x),
                   cfg.constraint_normal,
                   cfg.constraint_normal.dot(x) - cfg.constraint_rhs,
                   SpdOperator::from_matrix(cfg.metric),
                   cfg.delta,
                   CgOptions{4, 1e-14}};
  try {
    return pcpo_update(inp, metric).theta_next - x;
  } catch (const DegenerateGradient&) {
    return Vec::Zero(2);
  }
}

Toy2dResult toy2d_run(const Toy2dConfig& cfg, ProjectionMetric metric) {
  cfg.validate();
  Toy2dResult res;
  Vec x = cfg.x0;
  res.path.push_back(x);
  for (int k = 0; k < cfg.iterations && x.norm() <= cfg.escape_norm; ++k) {
    x += toy2d_direction(cfg, metric, x);
    res.path.push_back(x);
  }
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) {
      const Vec p = (Vec(2) << -1.0 + 0.25 * i, -2.0 + 0.25 * j).finished();
      res.field.emplace_back(p, toy2d_direction(cfg, metric, p));
    }
  return res;
}

void write_toy2d_path_csv(std::ostream& os, const std::vector<LabeledPath>& paths) {
  os << "# schema=1\n";
  os << "iter,x1,x2,metric\n";
  os.precision(17);
  for (const auto& [label, path] : paths)
    for (std::size_t k = 0; k < path.size(); ++k)
      os << k << ',' << path[k][0] << ',' << path[k][1] << ',' << label << '\n';
}

void write_toy2d_field_csv(std::ostream& os, const std::vector<LabeledField>& fields) {
  os << "# schema=1\n";
  os << "x1,x2,d1,d2,metric\n";
  os.precision(17);
  for (const auto& [label, field] : fields)
    for (const auto& [p, d] : field) os << p[0] << ',' << p[1] << ',' << d[0] << ',' << d[1] << ',' << label << '\n';
}

}  // namespace cpokit
