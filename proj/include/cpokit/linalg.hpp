#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace cpokit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an iterative solver produces non-finite or non-positive
/// curvature values.
class NumericalBreakdown : public std::runtime_error {
public:
  NumericalBreakdown(const std::string& what, int iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

private:
  int iteration_;
};

/// Raised by estimate_spectrum when power iteration does not settle.
class SpectrumNotConverged : public std::runtime_error {
public:
  SpectrumNotConverged(const std::string& what, double last_rayleigh)
      : std::runtime_error(what + " (last Rayleigh quotient " + std::to_string(last_rayleigh) + ")"),
        last_rayleigh_(last_rayleigh) {}
  double last_rayleigh() const noexcept { return last_rayleigh_; }

private:
  double last_rayleigh_;
};

/// Symmetric positive semi-definite linear operator exposed only through
/// matrix-vector products. The damping term is added to the diagonal on
/// every application, so apply(v) == base(v) + damping * v.
class SpdOperator {
public:
  using Apply = std::function<Vec(const Vec&)>;

  SpdOperator(Apply base, std::size_t dim, double damping = 0.0);

  /// Dense-matrix backed operator. The matrix is copied and owned.
  static SpdOperator from_matrix(const Mat& m, double damping = 0.0);
  static SpdOperator identity(std::size_t dim);

  Vec apply(const Vec& v) const;
  Vec operator()(const Vec& v) const { return apply(v); }

  std::size_t dim() const noexcept { return dim_; }
  double damping() const noexcept { return damping_; }

  /// Same base operator with a different damping.
  SpdOperator with_damping(double damping) const;

  /// Materializes the operator column by column (includes damping).
  Mat to_dense() const;

private:
  Apply base_;
  std::size_t dim_;
  double damping_;
};

struct CgOptions {
  int max_iters = 10;
  double tol = 1e-10;
};

struct CgResult {
  Vec x;
  int iterations = 0;
  /// True residual ||A x - rhs|| / ||rhs|| at exit.
  double relative_residual = 0.0;
  /// True when the tolerance was met, false when max_iters ran out.
  bool converged = false;
};

CgResult conjugate_gradient(const SpdOperator& op, const Vec& rhs, const CgOptions& opts = {});

struct ConditionReport {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double condition_number = 0.0;
};

/// Extremal eigenvalues of an SPD operator: power iteration for the largest,
/// inverse power iteration (inner solves by conjugate_gradient) for the smallest.
ConditionReport estimate_spectrum(const SpdOperator& op, int iters, double tol = 1e-9);

bool all_finite(const Vec& v);

}  // namespace cpokit
