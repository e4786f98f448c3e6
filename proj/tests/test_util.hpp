#pragma once

// Small helpers shared by the unit tests.

#include "cpokit/linalg.hpp"

#include <random>

namespace testutil {

inline cpokit::Vec randn(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  cpokit::Vec v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

/// Random SPD matrix with eigenvalues in [lo, hi].
inline cpokit::Mat random_spd(Eigen::Index n, double lo, double hi, std::mt19937_64& rng) {
  cpokit::Mat m(n, n);
  std::normal_distribution<double> nd;
  for (auto& x : m.reshaped()) x = nd(rng);
  const cpokit::Mat q = Eigen::HouseholderQR<cpokit::Mat>(m).householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  cpokit::Vec e(n);
  for (auto& x : e) x = u(rng);
  const cpokit::Mat out = q * e.asDiagonal() * q.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace testutil
