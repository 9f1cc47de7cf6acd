#include <algorithm>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "tpspline/basis.hpp"

using tps::MultiIndex;
using tps::Points;

TEST_CASE("monomial_basis sizes and ordering") {
  auto b = tps::monomial_basis(2, 1);
  REQUIRE(b.size() == 2);
  CHECK(b.indices[0] == MultiIndex({0}));
  CHECK(b.indices[1] == MultiIndex({1}));

  CHECK(tps::monomial_basis(4, 1).size() == 4);

  auto b22 = tps::monomial_basis(2, 2);
  REQUIRE(b22.size() == 3);
  CHECK(b22.indices[0] == MultiIndex({0, 0}));
  CHECK(b22.indices[1] == MultiIndex({1, 0}));
  CHECK(b22.indices[2] == MultiIndex({0, 1}));

  // graded: order 2 block of m=3, d=2 is (2,0), (1,1), (0,2)
  auto b32 = tps::monomial_basis(3, 2);
  CHECK(b32.indices[3] == MultiIndex({2, 0}));
  CHECK(b32.indices[4] == MultiIndex({1, 1}));
  CHECK(b32.indices[5] == MultiIndex({0, 2}));
}

TEST_CASE("monomial_basis count matches C(m+d-1,d) exhaustively") {
  auto binom = [](int n, int k) {
    long c = 1;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
  };
  for (int m = 1; m <= 6; ++m) {
    for (int d = 1; d <= 3; ++d) {
      if (2 * m <= d) {
        CHECK_THROWS_AS(tps::monomial_basis(m, d), std::domain_error);
        continue;
      }
      auto b = tps::monomial_basis(m, d);
      CHECK(b.size() == binom(m + d - 1, d));
      CHECK(b.size() == tps::basis_dimension(m, d));
      for (std::size_t i = 0; i < b.indices.size(); ++i) {
        CHECK(b.indices[i].order() <= m - 1);
        for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(b.indices[i] == b.indices[j]);
      }
    }
  }
}

TEST_CASE("monomial_basis rejects 2m <= d") {
  CHECK_THROWS_AS(tps::monomial_basis(1, 2), std::domain_error);
  CHECK_THROWS_AS(tps::monomial_basis(0, 1), std::invalid_argument);
}

TEST_CASE("eval_monomial") {
  CHECK(tps::eval_monomial(MultiIndex({0, 0}), Eigen::Vector2d(3.7, -1)) == 1.0);
  CHECK(tps::eval_monomial(MultiIndex({2}), Eigen::Matrix<double, 1, 1>(3.0)) == 9.0);
  CHECK(tps::eval_monomial(MultiIndex({1, 2}), Eigen::Vector2d(2, 3)) == 18.0);
  CHECK_THROWS(tps::eval_monomial(MultiIndex({1, 2}), Eigen::Vector3d(2, 3, 4)));
}

TEST_CASE("eval_monomial_deriv") {
  const Eigen::Vector2d x(2, 3);
  // d/dy x y^2 = 2 x y = 12
  CHECK(tps::eval_monomial_deriv(MultiIndex({1, 2}), MultiIndex({0, 1}), x) == 12.0);
  // d^2/dx^2 x y^2 = 0
  CHECK(tps::eval_monomial_deriv(MultiIndex({1, 2}), MultiIndex({2, 0}), x) == 0.0);
  // d^2/dy^2 x y^2 = 2x = 4
  CHECK(tps::eval_monomial_deriv(MultiIndex({1, 2}), MultiIndex({0, 2}), x) == 4.0);
}

TEST_CASE("check_unisolvent examples") {
  Points<double> two(2, 1);
  two << 0, 1;
  CHECK(tps::check_unisolvent(two, 2));

  Points<double> one(1, 1);
  one << 0.5;
  CHECK_FALSE(tps::check_unisolvent(one, 2));

  Points<double> collinear(3, 2);
  collinear << 0, 0, 1, 1, 2, 2;
  CHECK_FALSE(tps::check_unisolvent(collinear, 2));

  Points<double> tri(3, 2);
  tri << 0, 0, 1, 0, 0, 1;
  CHECK(tps::check_unisolvent(tri, 2));

  // six points on a circle cannot determine a quadratic: x^2 + y^2 - 1 vanishes on all
  Points<double> circle(6, 2);
  for (int k = 0; k < 6; ++k) {
    circle(k, 0) = std::cos(k * 1.0);
    circle(k, 1) = std::sin(k * 1.0);
  }
  CHECK_FALSE(tps::check_unisolvent(circle, 3));
}

TEST_CASE("check_unisolvent is permutation invariant and monotone under adding points") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 2;
    const int m = 2 + trial % 3;
    const auto big_m = tps::basis_dimension(m, d);
    const Eigen::Index n = big_m + static_cast<Eigen::Index>(trial % 3) - 1;
    Points<double> p = tps::testing::random_points(gen, std::max<Eigen::Index>(n, 1), d);
    if (trial % 5 == 0 && p.rows() > 1) p.row(1) = p.row(0);  // degenerate duplicates
    const bool base = tps::check_unisolvent(p, m);

    std::vector<Eigen::Index> perm(p.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Points<double> q(p.rows(), d);
    for (Eigen::Index i = 0; i < p.rows(); ++i) q.row(i) = p.row(perm[i]);
    CHECK(tps::check_unisolvent(q, m) == base);

    if (base) {
      Points<double> more(p.rows() + 1, d);
      more << p, tps::testing::random_points(gen, 1, d);
      CHECK(tps::check_unisolvent(more, m));
    }
  }
}

TEST_CASE("choose_anchors d=1 m=2 gives the endpoints and linear cardinals") {
  auto a = tps::choose_anchors(tps::Box<double>{0.0, 1.0}, 2, 1);
  REQUIRE(a.size() == 2);
  CHECK(a.points(0, 0) == 0.0);
  CHECK(a.points(1, 0) == 1.0);
  const auto basis = tps::monomial_basis(2, 1);
  for (double x : {0.0, 0.25, 0.7, 1.0}) {
    const auto q = tps::cardinal_row(basis, a, Eigen::Matrix<double, 1, 1>(x));
    CHECK(q(0) == doctest::Approx(1 - x).epsilon(1e-14));
    CHECK(q(1) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("choose_anchors cardinality holds across (m, d)") {
  for (int d = 1; d <= 3; ++d) {
    for (int m = 1; m <= 5; ++m) {
      if (2 * m <= d) continue;
      const tps::Box<double> box{-0.5, 2.0};
      auto a = tps::choose_anchors(box, m, d);
      const auto basis = tps::monomial_basis(m, d);
      REQUIRE(a.size() == basis.size());
      CHECK(tps::check_unisolvent(a.points, m));
      CHECK(a.points.minCoeff() >= box.lo);
      CHECK(a.points.maxCoeff() <= box.hi);
      double worst = 0;
      for (Eigen::Index j = 0; j < a.size(); ++j) {
        const auto q = tps::cardinal_row(basis, a, a.points.row(j));
        for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(q(i) - (i == j ? 1.0 : 0.0)));
      }
      CHECK(worst <= 1e-9);
    }
  }
}

TEST_CASE("choose_anchors d=2 m=2 picks non-collinear corners") {
  auto a = tps::choose_anchors(tps::Box<double>{0.0, 1.0}, 2, 2);
  REQUIRE(a.size() == 3);
  CHECK(tps::check_unisolvent(a.points, 2));
}

TEST_CASE("make_anchor_set rejects degenerate anchors") {
  const auto basis = tps::monomial_basis(2, 2);
  Points<double> bad(3, 2);
  bad << 0, 0, 1, 1, 2, 2;
  CHECK_THROWS_AS(tps::make_anchor_set(basis, bad), tps::UnisolvencyError);
}
