#include <cmath>
#include <random>

#include <Eigen/QR>

#include "doctest.h"
#include "test_support.hpp"
#include "tpspline/system.hpp"

using tps::Points;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Problem1d {
  tps::KernelSpec<double> spec;
  Points<double> x;
  VectorXd y;
};

Problem1d random_problem(std::mt19937_64& gen, int m, int d, Eigen::Index n) {
  Problem1d p{tps::make_kernel_spec(m, d, tps::Box<double>{0, 1}), tps::testing::random_points(gen, n, d), {}};
  std::normal_distribution<double> noise(0, 0.1);
  p.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) p.y(i) = std::sin(3 * p.x.row(i).sum()) + noise(gen);
  return p;
}

// Direct minimisation of (1/n)|Y - Pc - Rd|^2 + lambda d^T R d over (c, d) via
// the normal equations of the quadratic, solved in the least-norm sense.
VectorXd brute_force_fitted(const MatrixXd& r, const MatrixXd& p, const VectorXd& y, double lambda) {
  const auto n = static_cast<double>(y.size());
  MatrixXd a(y.size(), p.cols() + r.cols());
  a << p, r;
  MatrixXd h = a.transpose() * a / n;
  h.bottomRightCorner(r.rows(), r.cols()) += lambda * r;
  const VectorXd g = a.transpose() * y / n;
  const VectorXd z = h.completeOrthogonalDecomposition().solve(g);
  return a * z;
}

}  // namespace

TEST_CASE("assemble shapes and symmetry") {
  std::mt19937_64 gen(1);
  auto p = random_problem(gen, 2, 1, 3);
  auto dm = tps::assemble(p.x, p.spec);
  CHECK(dm.kernel.rows() == 3);
  CHECK(dm.kernel.cols() == 3);
  CHECK(dm.poly.rows() == 3);
  CHECK(dm.poly.cols() == 2);
  CHECK((dm.kernel - dm.kernel.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(dm.kernel(i, i) != 0.0);
}

TEST_CASE("an anchor among the design points gives a zero row and column") {
  auto spec = tps::make_kernel_spec(2, 1, tps::Box<double>{0, 1});
  Points<double> x(4, 1);
  x << 0.2, 0.0, 0.6, 0.9;  // 0.0 is an anchor
  auto dm = tps::assemble(x, spec);
  CHECK(dm.kernel.row(1).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(dm.kernel.col(1).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("duplicate design points are rejected with the offending pair") {
  auto spec = tps::make_kernel_spec(2, 2, tps::Box<double>{0, 1});
  Points<double> x(4, 2);
  x << 0.1, 0.1, 0.5, 0.2, 0.3, 0.9, 0.5, 0.2;
  try {
    tps::assemble(x, spec);
    FAIL("expected DuplicatePointsError");
  } catch (const tps::DuplicatePointsError& e) {
    CHECK(e.first() == 1);
    CHECK(e.second() == 3);
  }
}

TEST_CASE("solve_penalized satisfies the stationarity system") {
  std::mt19937_64 gen(2);
  for (auto [m, d] : {std::pair{2, 1}, {3, 1}, {4, 1}, {2, 2}, {3, 2}}) {
    auto p = random_problem(gen, m, d, 25);
    auto dm = tps::assemble(p.x, p.spec);
    for (double lambda : {1e-6, 1e-3, 1e-1}) {
      auto c = tps::solve_penalized(dm, p.y, lambda);
      const double n = static_cast<double>(dm.n());
      const VectorXd r1 = (dm.kernel + n * lambda * MatrixXd::Identity(dm.n(), dm.n())) * c.kernel + dm.poly * c.poly - p.y;
      const VectorXd r2 = dm.poly.transpose() * c.kernel;
      CHECK(std::sqrt(r1.squaredNorm() + r2.squaredNorm()) <= 1e-8 * p.y.norm());
      CHECK(r2.norm() <= 1e-7 * c.kernel.norm() * dm.poly.norm() + 1e-14);
      CHECK_FALSE(c.ridge_fallback);
    }
  }
}

TEST_CASE("large lambda gives the polynomial least-squares fit") {
  std::mt19937_64 gen(3);
  auto p = random_problem(gen, 2, 1, 20);
  auto dm = tps::assemble(p.x, p.spec);
  auto c = tps::solve_penalized(dm, p.y, 1e12);
  const VectorXd ls = dm.poly * (dm.poly.transpose() * dm.poly).ldlt().solve(dm.poly.transpose() * p.y);
  CHECK(c.kernel.norm() <= 1e-8);
  CHECK((dm.poly * c.poly + dm.kernel * c.kernel - ls).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("lambda = 0 interpolates") {
  std::mt19937_64 gen(4);
  auto p = random_problem(gen, 2, 1, 12);
  auto dm = tps::assemble(p.x, p.spec);
  auto c = tps::solve_penalized(dm, p.y, 0.0);
  CHECK((dm.poly * c.poly + dm.kernel * c.kernel - p.y).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("solve_penalized rejects negative lambda") {
  std::mt19937_64 gen(5);
  auto p = random_problem(gen, 2, 1, 5);
  auto dm = tps::assemble(p.x, p.spec);
  CHECK_THROWS_AS(tps::solve_penalized(dm, p.y, -1.0), std::invalid_argument);
}

TEST_CASE("penalized solve matches brute-force minimisation (n <= 8, d=1, m=2)") {
  std::mt19937_64 gen(6);
  for (Eigen::Index n = 3; n <= 8; ++n) {
    auto p = random_problem(gen, 2, 1, n);
    auto dm = tps::assemble(p.x, p.spec);
    for (double lambda : {1e-6, 1e-3, 1.0, 1e3}) {
      auto c = tps::solve_penalized(dm, p.y, lambda);
      const VectorXd fitted = dm.poly * c.poly + dm.kernel * c.kernel;
      const VectorXd oracle = brute_force_fitted(dm.kernel, dm.poly, p.y, lambda);
      CHECK((fitted - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("E_n nondecreasing and J nonincreasing along a lambda grid") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_problem(gen, 2 + trial % 2, 1 + trial % 2, 30);
    auto dm = tps::assemble(p.x, p.spec);
    double prev_e = -1, prev_j = 1e300;
    for (int k = 0; k < 20; ++k) {
      const double lambda = std::pow(10.0, -8 + 0.4 * k);
      auto c = tps::solve_penalized(dm, p.y, lambda);
      const double e = (p.y - dm.poly * c.poly - dm.kernel * c.kernel).squaredNorm() / 30.0;
      const double j = c.kernel.dot(dm.kernel * c.kernel);
      CHECK(e >= prev_e - 1e-12 * std::abs(prev_e));
      CHECK(j <= prev_j + 1e-9 * std::abs(prev_j));
      prev_e = e;
      prev_j = j;
    }
  }
}

TEST_CASE("PenaltyPath agrees with the bordered solve") {
  std::mt19937_64 gen(8);
  for (auto [m, d] : {std::pair{2, 1}, {4, 1}, {2, 2}, {3, 2}}) {
    auto p = random_problem(gen, m, d, 30);
    auto dm = tps::assemble(p.x, p.spec);
    tps::PenaltyPath<double> path(dm, p.y);
    for (double lambda : {1e-7, 1e-4, 1e-2, 10.0}) {
      auto a = tps::solve_penalized(dm, p.y, lambda);
      auto b = path.coefficients(lambda);
      const VectorXd fa = dm.poly * a.poly + dm.kernel * a.kernel;
      const VectorXd fb = dm.poly * b.poly + dm.kernel * b.kernel;
      CHECK((fa - fb).cwiseAbs().maxCoeff() <= 1e-8 * p.y.cwiseAbs().maxCoeff());
      const double j = b.kernel.dot(dm.kernel * b.kernel);
      CHECK(path.roughness(lambda) == doctest::Approx(j).epsilon(1e-8));
      CHECK(path.mean_sq_residual(lambda) == doctest::Approx((p.y - fb).squaredNorm() / 30.0).epsilon(1e-8));
    }
    const VectorXd ls = dm.poly * dm.poly.colPivHouseholderQr().solve(p.y);
    CHECK(path.polynomial_residual() == doctest::Approx((p.y - ls).squaredNorm() / 30.0).epsilon(1e-10));
  }
}

TEST_CASE("PenaltyPath rejects non-unisolvent design") {
  auto spec = tps::make_kernel_spec(2, 2, tps::Box<double>{0, 2});
  Points<double> x(4, 2);
  x << 0, 0, 0.5, 0.5, 1, 1, 1.5, 1.5;
  auto dm = tps::assemble(x, spec);
  CHECK_THROWS_AS(tps::PenaltyPath<double>(dm, VectorXd::Ones(4)), tps::UnisolvencyError);
}
