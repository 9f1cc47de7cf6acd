#pragma once

// Roughness-constrained (A), residual-constrained (B) and penalized (C)
// smoothing-spline fits. (A) and (B) are solved by locating the lambda at
// which the constraint binds on the strictly monotone penalized path.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "tpspline/errors.hpp"
#include "tpspline/model.hpp"
#include "tpspline/system.hpp"

namespace tps {

enum class Problem { A, B, C, Interp, Poly };

enum class EdgeCase { InterpolantRegime, PolynomialRegime };

inline const char* to_string(EdgeCase e) {
  return e == EdgeCase::InterpolantRegime ? "interpolant_regime" : "polynomial_regime";
}

/// Budget is U_n for A, S_n for B, lambda for C; ignored otherwise.
template <typename Scalar>
struct FitRequest {
  Problem problem = Problem::C;
  Scalar budget = Scalar(0);
};

template <typename Scalar>
struct FitResult {
  SplineModel<Scalar> model;
  Scalar achieved_J;
  Scalar achieved_En;
  Scalar lambda_star;  // 0 for the interpolant, +inf for the polynomial fit
  int iterations = 0;
  std::optional<EdgeCase> edge_case;
  bool ridge_fallback = false;
};

template <typename Scalar>
struct CrossValidation {
  Scalar lambda;
  std::vector<Scalar> scores;  // V(lambda) per grid entry
};

namespace detail {

template <typename Scalar>
void check_data(const Dataset<Scalar>& data, const SplineSetup<Scalar>& setup) {
  if (data.x.rows() != data.y.size()) throw std::invalid_argument("dataset: X and Y lengths differ");
  if (data.dim() != setup.d()) throw std::invalid_argument("dataset dimension does not match setup");
}

// Validates Assumption-1 style preconditions and assembles the system.
template <typename Scalar>
DesignMatrices<Scalar> prepare(const Dataset<Scalar>& data, const SplineSetup<Scalar>& setup) {
  check_data(data, setup);
  if (data.size() < setup.basis_size()) {
    throw UnisolvencyError("need at least M=" + std::to_string(setup.basis_size()) + " points, got " +
                           std::to_string(data.size()));
  }
  DesignMatrices<Scalar> dm = assemble(data.x, setup.kernel);
  if (!check_unisolvent(data.x, setup.m())) throw UnisolvencyError("design points are not unisolvent");
  return dm;
}

template <typename Scalar>
FitResult<Scalar> make_result(const Dataset<Scalar>& data, const SplineSetup<Scalar>& setup,
                              const DesignMatrices<Scalar>& dm, const Coefficients<Scalar>& coeffs, Scalar lambda,
                              std::optional<EdgeCase> edge, int iterations) {
  // Both diagnostics are accumulated wide: near lambda = 0 the coefficients are
  // large and the fitted values cancel against Y.
  using W = WideScalar<Scalar>;
  const Vector<W> dw = coeffs.kernel.template cast<W>();
  const Matrix<W> kernel_w = dm.kernel.template cast<W>();
  Scalar j = static_cast<Scalar>(dw.dot(kernel_w * dw));
  if (j < Scalar(0) && j >= Scalar(-1e-8)) j = Scalar(0);
  const Vector<W> resid = data.y.template cast<W>() - dm.poly.template cast<W>() * coeffs.poly.template cast<W>() - kernel_w * dw;
  const Scalar en = static_cast<Scalar>(resid.squaredNorm() / W(data.size()));
  SplineModel<Scalar> model(setup, data.x, coeffs.poly, coeffs.kernel, lambda, j, en);
  return FitResult<Scalar>{std::move(model), j, en, lambda, iterations, edge, coeffs.ridge_fallback};
}

// Finds lambda with f(lambda) = target for f monotone in lambda, by bisection
// on log(lambda). The bracket starts at [1e-14, 1e6] and expands geometrically.
template <typename Scalar, typename F>
std::pair<Scalar, int> find_lambda(F f, Scalar target, bool increasing, Scalar rel_tol = Scalar(1e-10)) {
  using std::abs;
  using std::sqrt;
  auto below = [&](Scalar v) { return increasing ? v < target : v > target; };
  Scalar lo(1e-14), hi(1e6);
  int iterations = 0;
  while (!below(f(lo))) {
    lo *= Scalar(1e-4);
    if (lo < Scalar(1e-300)) throw RootFindingError("lambda bracket underflow", double(lo), double(hi));
  }
  while (below(f(hi))) {
    hi *= Scalar(1e4);
    if (hi > Scalar(1e300)) throw RootFindingError("lambda bracket overflow", double(lo), double(hi));
  }
  Scalar mid = sqrt(lo * hi);
  Scalar best = mid;
  Scalar best_gap = std::numeric_limits<Scalar>::infinity();
  for (; iterations < 200; ++iterations) {
    mid = sqrt(lo * hi);
    const Scalar v = f(mid);
    const Scalar gap = abs(v - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = mid;
    }
    if (gap <= rel_tol * target) return {mid, iterations + 1};
    if (below(v)) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi <= lo * (Scalar(1) + Scalar(4) * std::numeric_limits<Scalar>::epsilon())) break;
  }
  if (best_gap <= Scalar(1e-6) * target) return {best, iterations};
  throw RootFindingError("constraint not met to 1e-6 after bisection", double(lo), double(hi));
}

}  // namespace detail

template <typename Scalar>
FitResult<Scalar> poly_least_squares(const Dataset<Scalar>& data, const SplineSetup<Scalar>& setup) {
  detail::check_data(data, setup);
  if (data.size() < 1) throw std::invalid_argument("poly_least_squares: empty dataset");
  const Matrix<Scalar> p = basis_matrix(setup.basis(), data.x);
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> cod(p);
  Vector<Scalar> c = cod.solve(data.y);
  const Scalar en = (data.y - p * c).squaredNorm() / Scalar(data.size());
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  SplineModel<Scalar> model(setup, data.x, c, Vector<Scalar>::Zero(data.size()), inf, Scalar(0), en);
  return FitResult<Scalar>{std::move(model), Scalar(0), en, inf, 0, EdgeCase::PolynomialRegime, false};
}

/// Minimum-roughness interpolant f_1.
template <typename Scalar>
FitResult<Scalar> interpolant(const Dataset<Scalar>& data, const SplineSetup<Scalar>& setup) {
  const DesignMatrices<Scalar> dm = detail::prepare(data, setup);
  const Coefficients<Scalar> coeffs = solve_penalized(dm, data.y, Scalar(0));
  return detail::make_result(data, setup, dm, coeffs, Scalar(0), std::optional(EdgeCase::InterpolantRegime), 0);
}

template <typename Scalar>
FitResult<Scalar> fit_problem_c(const Dataset<Scalar>& data, Scalar lambda, const SplineSetup<Scalar>& setup) {
  if (!(lambda >= Scalar(0))) throw std::invalid_argument("fit_problem_c: lambda must be nonnegative");
  if (lambda == Scalar(0)) return interpolant(data, setup);
  const DesignMatrices<Scalar> dm = detail::prepare(data, setup);
  const Coefficients<Scalar> coeffs = solve_penalized(dm, data.y, lambda);
  return detail::make_result(data, setup, dm, coeffs, lambda, std::optional<EdgeCase>{}, 0);
}

/// Minimise E_n subject to J <= U_n.
template <typename Scalar>
FitResult<Scalar> fit_problem_a(const Dataset<Scalar>& data, Scalar roughness_budget, const SplineSetup<Scalar>& setup) {
  if (!(roughness_budget >= Scalar(0))) throw std::invalid_argument("fit_problem_a: U_n must be nonnegative");
  const DesignMatrices<Scalar> dm = detail::prepare(data, setup);
  if (roughness_budget == Scalar(0)) return poly_least_squares(data, setup);
  const PenaltyPath<Scalar> path(dm, data.y);
  // J(f_1) from the interpolant itself: the spectral path is least accurate
  // at lambda = 0.
  try {
    FitResult<Scalar> f1 = interpolant(data, setup);
    if (roughness_budget >= f1.achieved_J) return f1;
  } catch (const SingularSystemError&) {
    if (roughness_budget >= path.interpolant_roughness()) throw;
  }
  const auto [lambda, iterations] = detail::find_lambda<Scalar>(
      [&](Scalar l) { return path.roughness(l); }, roughness_budget, /*increasing=*/false);
  return detail::make_result(data, setup, dm, path.coefficients(lambda), lambda, std::optional<EdgeCase>{}, iterations);
}

/// Minimise J subject to E_n <= S_n.
template <typename Scalar>
FitResult<Scalar> fit_problem_b(const Dataset<Scalar>& data, Scalar residual_budget, const SplineSetup<Scalar>& setup) {
  if (!(residual_budget >= Scalar(0))) throw std::invalid_argument("fit_problem_b: S_n must be nonnegative");
  const DesignMatrices<Scalar> dm = detail::prepare(data, setup);
  if (residual_budget == Scalar(0)) return interpolant(data, setup);
  FitResult<Scalar> fp = poly_least_squares(data, setup);
  if (residual_budget >= fp.achieved_En) return fp;
  const PenaltyPath<Scalar> path(dm, data.y);
  const auto [lambda, iterations] = detail::find_lambda<Scalar>(
      [&](Scalar l) { return path.mean_sq_residual(l); }, residual_budget, /*increasing=*/true);
  return detail::make_result(data, setup, dm, path.coefficients(lambda), lambda, std::optional<EdgeCase>{}, iterations);
}

template <typename Scalar>
FitResult<Scalar> fit(const Dataset<Scalar>& data, const FitRequest<Scalar>& request, const SplineSetup<Scalar>& setup) {
  switch (request.problem) {
    case Problem::A: return fit_problem_a(data, request.budget, setup);
    case Problem::B: return fit_problem_b(data, request.budget, setup);
    case Problem::C: return fit_problem_c(data, request.budget, setup);
    case Problem::Interp: return interpolant(data, setup);
    case Problem::Poly: return poly_least_squares(data, setup);
  }
  throw std::invalid_argument("fit: unknown problem");
}

/// Psi_n(u): the smallest E_n attainable with J <= u.
template <typename Scalar>
Scalar psi_n(const Dataset<Scalar>& data, Scalar u, const SplineSetup<Scalar>& setup) {
  return fit_problem_a(data, u, setup).achieved_En;
}

/// Fits (B) at S_n, then (A) at U_n = J(g); returns {B, A}.
template <typename Scalar>
std::pair<FitResult<Scalar>, FitResult<Scalar>> duality_roundtrip(const Dataset<Scalar>& data, Scalar residual_budget,
                                                                  const SplineSetup<Scalar>& setup) {
  FitResult<Scalar> b = fit_problem_b(data, residual_budget, setup);
  if (b.edge_case) throw std::invalid_argument("duality_roundtrip: need 0 < S_n < E_n(f_P)");
  FitResult<Scalar> a = fit_problem_a(data, b.achieved_J, setup);
  return {std::move(b), std::move(a)};
}

/// Leave-one-out score V(lambda) = (1/n) sum_k (Y_k - f^[k]_lambda(X_k))^2, where
/// f^[k] minimises (1/n) sum_{i != k} (Y_i - f(X_i))^2 + lambda J(f). Ties go to
/// the larger lambda.
template <typename Scalar>
CrossValidation<Scalar> cross_validate(const Dataset<Scalar>& data, const std::vector<Scalar>& grid,
                                       const SplineSetup<Scalar>& setup) {
  if (grid.empty()) throw std::invalid_argument("cross_validate: empty lambda grid");
  for (Scalar l : grid)
    if (!(l > Scalar(0))) throw std::invalid_argument("cross_validate: grid values must be positive");
  const DesignMatrices<Scalar> dm = detail::prepare(data, setup);
  const Eigen::Index n = data.size();
  if (n < setup.basis_size() + 1) throw UnisolvencyError("cross_validate: need n >= M + 1");

  std::vector<Scalar> scores(grid.size(), Scalar(0));
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index k = 0; k < n; ++k) {
    keep.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != k) keep.push_back(i);
    const Points<Scalar> xk = data.x(keep, Eigen::all);
    if (!check_unisolvent(xk, setup.m()))
      throw UnisolvencyError("cross_validate: leave-one-out subset without point " + std::to_string(k) +
                             " is not unisolvent");
    const Matrix<Scalar> rk = dm.kernel(keep, keep);
    const Matrix<Scalar> pk = dm.poly(keep, Eigen::all);
    const Vector<Scalar> yk = data.y(keep);
    const PenaltyPath<Scalar> path(rk, pk, yk, Scalar(n));
    const RowVector<Scalar> r_row = dm.kernel(k, keep);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const Coefficients<Scalar> c = path.coefficients(grid[g]);
      const Scalar pred = dm.poly.row(k).dot(c.poly) + r_row.dot(c.kernel);
      const Scalar e = data.y(k) - pred;
      scores[g] += e * e;
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    scores[g] /= Scalar(n);
    if (scores[g] < scores[best] || (scores[g] == scores[best] && grid[g] > grid[best])) best = g;
  }
  return CrossValidation<Scalar>{grid[best], std::move(scores)};
}

/// {1e-11, 5e-11, 1e-10, 5e-10, ..., 1e-1, 5e-1, 1}.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int e = -11; e < 0; ++e) {
    g.push_back(std::pow(10.0, e));
    g.push_back(5 * std::pow(10.0, e));
  }
  g.push_back(1.0);
  return g;
}

}  // namespace tps
