#include "cpokit/linalg.hpp"

#include <cmath>
#include <random>
#include <utility>

namespace cpokit {

SpdOperator::SpdOperator(Apply base, std::size_t dim, double damping)
    : base_(std::move(base)), dim_(dim), damping_(damping) {
  if (dim_ == 0) throw std::invalid_argument("SpdOperator: dim must be positive");
  if (!(damping_ >= 0.0)) throw std::invalid_argument("SpdOperator: damping must be nonnegative");
}

SpdOperator SpdOperator::from_matrix(const Mat& m, double damping) {
  if (m.rows() != m.cols()) throw std::invalid_argument("SpdOperator::from_matrix: matrix not square");
  return SpdOperator([m](const Vec& v) -> Vec { return m * v; }, static_cast<std::size_t>(m.rows()), damping);
}

SpdOperator SpdOperator::identity(std::size_t dim) {
  return SpdOperator([](const Vec& v) -> Vec { return v; }, dim, 0.0);
}

Vec SpdOperator::apply(const Vec& v) const {
  if (static_cast<std::size_t>(v.size()) != dim_)
    throw std::invalid_argument("SpdOperator::apply: dimension mismatch");
  Vec out = base_(v);
  if (damping_ != 0.0) out.noalias() += damping_ * v;
  return out;
}

SpdOperator SpdOperator::with_damping(double damping) const { return SpdOperator(base_, dim_, damping); }

Mat SpdOperator::to_dense() const {
  const auto n = static_cast<Eigen::Index>(dim_);
  Mat m(n, n);
  Vec e = Vec::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    m.col(j) = apply(e);
    e[j] = 0.0;
  }
  return m;
}

bool all_finite(const Vec& v) { return v.allFinite(); }

CgResult conjugate_gradient(const SpdOperator& op, const Vec& rhs, const CgOptions& opts) {
  if (static_cast<std::size_t>(rhs.size()) != op.dim())
    throw std::invalid_argument("conjugate_gradient: rhs length does not match operator dimension");
  if (opts.max_iters < 1) throw std::invalid_argument("conjugate_gradient: max_iters must be >= 1");
  if (!all_finite(rhs)) throw NumericalBreakdown("conjugate_gradient: non-finite right-hand side", 0);

  CgResult res;
  res.x = Vec::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    res.converged = true;
    return res;
  }

  Vec r = rhs;
  Vec p = r;
  double rho = r.squaredNorm();
  const double stop = opts.tol * rhs_norm;

  int it = 0;
  while (it < opts.max_iters) {
    ++it;
    const Vec ap = op.apply(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0)
      throw NumericalBreakdown("conjugate_gradient: non-positive or non-finite curvature p'Ap", it);
    const double alpha = rho / pap;
    res.x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rho_next = r.squaredNorm();
    if (!std::isfinite(rho_next) || !all_finite(res.x))
      throw NumericalBreakdown("conjugate_gradient: non-finite iterate", it);
    if (std::sqrt(rho_next) <= stop) break;
    p = r + (rho_next / rho) * p;
    rho = rho_next;
  }

  res.iterations = it;
  res.relative_residual = (op.apply(res.x) - rhs).norm() / rhs_norm;
  res.converged = res.relative_residual <= opts.tol;
  return res;
}

namespace {

struct PowerResult {
  double value;
  bool converged;
};

// Power iteration on `step` (either A or A^{-1}); returns the dominant
// eigenvalue of that map.
template <typename Step>
PowerResult power_iterate(Step&& step, std::size_t dim, int iters, double tol) {
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
  v.normalize();

  double rayleigh = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec w = step(v);
    rayleigh = v.dot(w);
    const double resid = (w - rayleigh * v).norm();
    const double wn = w.norm();
    if (!(wn > 0.0) || !std::isfinite(wn)) return {rayleigh, false};
    if (resid <= tol * std::abs(rayleigh)) return {rayleigh, true};
    v = w / wn;
  }
  return {rayleigh, false};
}

}  // namespace

ConditionReport estimate_spectrum(const SpdOperator& op, int iters, double tol) {
  if (iters < 1) throw std::invalid_argument("estimate_spectrum: iters must be >= 1");

  const auto top = power_iterate([&](const Vec& v) { return op.apply(v); }, op.dim(), iters, tol);
  if (!top.converged) throw SpectrumNotConverged("estimate_spectrum: power iteration did not converge", top.value);

  CgOptions inner;
  inner.max_iters = static_cast<int>(4 * op.dim() + 10);
  inner.tol = 1e-13;
  const auto inv = power_iterate([&](const Vec& v) { return conjugate_gradient(op, v, inner).x; }, op.dim(),
                                 iters, tol);
  if (!inv.converged || !(inv.value > 0.0))
    throw SpectrumNotConverged("estimate_spectrum: inverse iteration did not converge", inv.value);

  ConditionReport rep;
  rep.sigma_max = top.value;
  rep.sigma_min = 1.0 / inv.value;
  rep.condition_number = rep.sigma_max / rep.sigma_min;
  return rep;
}

}  // namespace cpokit
