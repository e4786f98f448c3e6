#pragma once

// Independent reference solvers used only for verification. Nothing in here
// calls into the production update path: everything works on dense matrices
// with direct factorizations, bisection, or brute-force search.

#include "cpokit/linalg.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace cpokit::oracle {

/// x = M^{-1} v via a dense LDLT factorization.
Vec dense_solve(const Mat& m, const Vec& v);

/// Extremal eigenvalues (min, max) of a symmetric matrix.
std::pair<double, double> extremal_eigenvalues(const Mat& m);

/// argmax g'd s.t. 0.5 d'Hd <= delta, found by bisection on the multiplier
/// lambda in d = H^{-1} g / lambda until the quadratic constraint is tight.
Vec trust_region_step(const Mat& h, const Vec& g, double delta);

/// argmin 0.5 (x - mid)' L (x - mid) s.t. a'(x - anchor) + b <= 0, solved by
/// checking the half-space and otherwise the bordered KKT system with LU.
Vec halfspace_projection(const Vec& mid, const Vec& anchor, const Vec& a, double b, const Mat& l);

/// Reward step followed by half-space projection, both by the routines above.
Vec two_stage_update(const Vec& theta, const Vec& g, const Vec& a, double b, const Mat& h, double delta,
                     const Mat& l);

/// Solves the CPO trust-region QCQP
///   max g'd  s.t. 0.5 d'Hd <= delta,  a'd + b <= 0
/// through its two-variable dual (lambda, nu) >= 0 by log-grid search
/// followed by nested golden-section polish. Returns d.
Vec cpo_qcqp_dual_search(const Mat& h, const Vec& g, const Vec& a, double b, double delta);

/// Nearest point (Euclidean) in the intersection of 2-D half-spaces
/// {x : n_i'x <= c_i}, found by a fine grid over a box around `point`
/// followed by polishing over active-set candidates near the grid winner.
Vec intersection_projection_2d(const Vec& point, const std::vector<std::pair<Vec, double>>& halfspaces,
                               double box_half_width, int grid_per_axis);

/// Central finite-difference gradient.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step);

/// Central finite-difference Hessian (symmetrized).
Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x, double step);

}  // namespace cpokit::oracle
