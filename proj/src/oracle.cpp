#include "cpokit/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cpokit::oracle {

Vec dense_solve(const Mat& m, const Vec& v) {
  Eigen::LDLT<Mat> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("oracle::dense_solve: factorization failed");
  return ldlt.solve(v);
}

std::pair<double, double> extremal_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("oracle::extremal_eigenvalues: solver failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

Vec trust_region_step(const Mat& h, const Vec& g, double delta) {
  const Vec hg = dense_solve(h, g);
  // phi(lambda) = 0.5 d'Hd - delta with d = H^{-1}g / lambda; decreasing in lambda.
  auto excess = [&](double lambda) {
    const Vec d = hg / lambda;
    return 0.5 * d.dot(h * d) - delta;
  };
  double lo = 1e-12, hi = 1.0;
  while (excess(hi) > 0.0) hi *= 2.0;
  while (excess(lo) < 0.0) lo *= 0.5;
  for (int i = 0; i < 400 && hi - lo > 1e-16 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return hg / (0.5 * (lo + hi));
}

Vec halfspace_projection(const Vec& mid, const Vec& anchor, const Vec& a, double b, const Mat& l) {
  if (a.dot(mid - anchor) + b <= 0.0) return mid;
  const auto n = mid.size();
  Mat kkt = Mat::Zero(n + 1, n + 1);
  kkt.topLeftCorner(n, n) = l;
  kkt.topRightCorner(n, 1) = a;
  kkt.bottomLeftCorner(1, n) = a.transpose();
  Vec rhs(n + 1);
  rhs.head(n) = l * mid;
  rhs[n] = a.dot(anchor) - b;
  const Vec sol = kkt.partialPivLu().solve(rhs);
  return sol.head(n);
}

Vec two_stage_update(const Vec& theta, const Vec& g, const Vec& a, double b, const Mat& h, double delta,
                     const Mat& l) {
  const Vec mid = theta + trust_region_step(h, g, delta);
  return halfspace_projection(mid, theta, a, b, l);
}

namespace {

template <typename F>
double golden_min(F&& f, double lo, double hi, int iters = 200) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters && hi - lo > 0.0; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Vec cpo_qcqp_dual_search(const Mat& h, const Vec& g, const Vec& a, double b, double delta) {
  const Vec hg = dense_solve(h, g);
  const Vec ha = dense_solve(h, a);
  const double q = g.dot(hg), r = g.dot(ha), s = a.dot(ha);

  // Dual objective (to be minimized over lambda > 0, nu >= 0).
  auto dual = [&](double log_lambda, double nu) {
    const double lambda = std::exp(log_lambda);
    return (q - 2.0 * nu * r + nu * nu * s) / (2.0 * lambda) + lambda * delta - nu * b;
  };

  const double nu_scale = std::sqrt(q / s);
  const double lam_scale = std::sqrt(q / (2.0 * delta));
  const double t_lo = std::log(lam_scale) - 40.0, t_hi = std::log(lam_scale) + 40.0;
  // Profile over lambda by golden section, then grid plus golden over nu.
  auto inner = [&](double nu) {
    const double t = golden_min([&](double tt) { return dual(tt, nu); }, t_lo, t_hi);
    return dual(t, nu);
  };
  std::vector<double> nus{0.0};
  for (int i = 0; i <= 480; ++i) nus.push_back(nu_scale * std::pow(10.0, -8.0 + i * (16.0 / 480.0)));
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_nu = 0;
  for (std::size_t i = 0; i < nus.size(); ++i) {
    const double v = inner(nus[i]);
    if (v < best) {
      best = v;
      best_nu = i;
    }
  }
  const double nu_lo = best_nu == 0 ? 0.0 : nus[best_nu - 1];
  const double nu_hi = best_nu + 1 < nus.size() ? nus[best_nu + 1] : 2.0 * nus[best_nu];
  double nu = golden_min(inner, nu_lo, nu_hi);
  if (best_nu <= 1 && inner(0.0) <= inner(nu)) nu = 0.0;
  const double t = golden_min([&](double tt) { return dual(tt, nu); }, t_lo, t_hi);
  return (hg - nu * ha) / std::exp(t);
}

Vec intersection_projection_2d(const Vec& point, const std::vector<std::pair<Vec, double>>& halfspaces,
                               double box_half_width, int grid_per_axis) {
  if (point.size() != 2) throw std::invalid_argument("oracle::intersection_projection_2d: 2-D only");
  auto feasible = [&](const Vec& x, double slack) {
    for (const auto& [n, c] : halfspaces)
      if (n.dot(x) > c + slack) return false;
    return true;
  };

  const double step = 2.0 * box_half_width / grid_per_axis;
  Vec grid_best = point;
  double grid_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid_per_axis; ++i)
    for (int j = 0; j <= grid_per_axis; ++j) {
      Vec x(2);
      x << point[0] - box_half_width + i * step, point[1] - box_half_width + j * step;
      if (!feasible(x, 0.0)) continue;
      const double d = (x - point).norm();
      if (d < grid_dist) {
        grid_dist = d;
        grid_best = x;
      }
    }
  if (!std::isfinite(grid_dist)) throw std::runtime_error("oracle::intersection_projection_2d: empty grid");

  // Polish: exact candidates from each active set, keep the nearest feasible
  // one provided it lies within grid resolution of the grid winner. Along a
  // face the grid winner can drift by about sqrt(2 d step) from the optimum.
  std::vector<Vec> candidates{point};
  for (const auto& [n, c] : halfspaces) candidates.push_back(point - (n.dot(point) - c) / n.squaredNorm() * n);
  for (std::size_t i = 0; i < halfspaces.size(); ++i)
    for (std::size_t j = i + 1; j < halfspaces.size(); ++j) {
      Mat m(2, 2);
      m.row(0) = halfspaces[i].first.transpose();
      m.row(1) = halfspaces[j].first.transpose();
      if (std::abs(m.determinant()) < 1e-14) continue;
      Vec rhs(2);
      rhs << halfspaces[i].second, halfspaces[j].second;
      candidates.push_back(m.partialPivLu().solve(rhs));
    }
  Vec best = grid_best;
  double best_dist = grid_dist;
  const double reach = 2.0 * std::sqrt(2.0 * grid_dist * step + step * step) + 2.0 * step;
  for (const auto& c : candidates) {
    if (!feasible(c, 1e-12)) continue;
    const double d = (c - point).norm();
    if (d <= best_dist && (c - grid_best).norm() <= reach) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  Vec grad(x.size());
  Vec xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    grad[i] = (f(xp) - f(xm)) / (2.0 * step);
    xp[i] = xm[i] = x[i];
  }
  return grad;
}

Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  const auto n = x.size();
  Mat hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      Vec pp = x, pm = x, mp = x, mm = x;
      pp[i] += step;
      pp[j] += step;
      pm[i] += step;
      pm[j] -= step;
      mp[i] -= step;
      mp[j] += step;
      mm[i] -= step;
      mm[j] -= step;
      hess(i, j) = hess(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * step * step);
    }
  return hess;
}

}  // namespace cpokit::oracle
