#pragma once

// Shared helpers for the unit and acceptance suites: seeded data generators
// and finite-difference oracles. Nothing here calls into the solver paths.

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Core>

#include "tpspline/basis.hpp"

namespace tps::testing {

inline Points<double> random_points(std::mt19937_64& gen, Eigen::Index n, int d, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Points<double> p(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) p(i, j) = u(gen);
  return p;
}

/// Central difference of f along axis j.
inline double central_diff(const std::function<double(const RowVector<double>&)>& f, RowVector<double> x, int j,
                           double h) {
  RowVector<double> xp = x, xm = x;
  xp(j) += h;
  xm(j) -= h;
  return (f(xp) - f(xm)) / (2 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int k = 1; k < panels; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace tps::testing
