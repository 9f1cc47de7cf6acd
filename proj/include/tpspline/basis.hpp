#pragma once

// Polynomial space P_{m-1} on R^d: multi-indices, monomial evaluation,
// unisolvency, and anchor points with their cardinal (Lagrange) polynomials.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "tpspline/errors.hpp"

namespace tps {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// One point per row.
template <typename Scalar>
using Points = Matrix<Scalar>;

template <typename Derived>
RowVector<typename Derived::Scalar> as_row(const Eigen::MatrixBase<Derived>& x) {
  RowVector<typename Derived::Scalar> r(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) r(j) = x(j);
  return r;
}

/// Closed box [lo, hi]^d.
template <typename Scalar>
struct Box {
  Scalar lo = Scalar(0);
  Scalar hi = Scalar(1);

  Scalar width() const { return hi - lo; }
  Scalar mid() const { return (lo + hi) / Scalar(2); }
};

class MultiIndex {
public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> exponents) : exponents_(std::move(exponents)) {
    for (int e : exponents_) {
      if (e < 0) throw std::invalid_argument("MultiIndex: negative exponent");
    }
  }

  static MultiIndex zero(int dim) { return MultiIndex(std::vector<int>(dim, 0)); }
  static MultiIndex axis(int dim, int j, int power = 1) {
    std::vector<int> e(dim, 0);
    e.at(j) = power;
    return MultiIndex(std::move(e));
  }

  int dim() const { return static_cast<int>(exponents_.size()); }
  int order() const { return std::accumulate(exponents_.begin(), exponents_.end(), 0); }
  int operator[](int j) const { return exponents_[j]; }
  const std::vector<int>& exponents() const { return exponents_; }

  bool operator==(const MultiIndex&) const = default;

  std::string str() const {
    std::string s = "(";
    for (int j = 0; j < dim(); ++j) {
      if (j) s += ",";
      s += std::to_string(exponents_[j]);
    }
    return s + ")";
  }

private:
  std::vector<int> exponents_;
};

/// Monomials of total degree <= m-1 in graded lexicographic order.
struct PolyBasis {
  int m = 0;
  int d = 0;
  std::vector<MultiIndex> indices;

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

/// C(m+d-1, d).
inline long basis_dimension(int m, int d) {
  long c = 1;
  for (int k = 1; k <= d; ++k) c = c * (m - 1 + k) / k;
  return c;
}

namespace detail {

inline void exponents_of_order(int d, int remaining, std::vector<int>& prefix,
                               std::vector<MultiIndex>& out) {
  if (static_cast<int>(prefix.size()) == d - 1) {
    prefix.push_back(remaining);
    out.emplace_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    prefix.push_back(e);
    exponents_of_order(d, remaining - e, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace detail

inline PolyBasis monomial_basis(int m, int d) {
  if (m < 1 || d < 1) throw std::invalid_argument("monomial_basis: m and d must be positive");
  if (2 * m <= d) {
    throw std::domain_error("monomial_basis: need 2m > d (m=" + std::to_string(m) +
                            ", d=" + std::to_string(d) + ")");
  }
  PolyBasis basis{m, d, {}};
  std::vector<int> prefix;
  for (int k = 0; k < m; ++k) detail::exponents_of_order(d, k, prefix, basis.indices);
  return basis;
}

template <typename Derived>
typename Derived::Scalar eval_monomial(const MultiIndex& alpha, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (alpha.dim() != x.size()) throw std::invalid_argument("eval_monomial: dimension mismatch");
  Scalar v(1);
  for (int j = 0; j < alpha.dim(); ++j) {
    for (int k = 0; k < alpha[j]; ++k) v *= x(j);
  }
  return v;
}

/// D^deriv applied to x^power.
template <typename Derived>
typename Derived::Scalar eval_monomial_deriv(const MultiIndex& power, const MultiIndex& deriv,
                                             const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Scalar v(1);
  for (int j = 0; j < power.dim(); ++j) {
    const int p = power[j];
    const int a = deriv[j];
    if (a > p) return Scalar(0);
    for (int k = 0; k < a; ++k) v *= Scalar(p - k);
    for (int k = 0; k < p - a; ++k) v *= x(j);
  }
  return v;
}

/// Row [p_1(x) ... p_M(x)].
template <typename Derived>
RowVector<typename Derived::Scalar> basis_row(const PolyBasis& basis, const Eigen::MatrixBase<Derived>& x) {
  RowVector<typename Derived::Scalar> row(basis.size());
  for (Eigen::Index k = 0; k < basis.size(); ++k) row(k) = eval_monomial(basis.indices[k], x);
  return row;
}

template <typename Derived>
RowVector<typename Derived::Scalar> basis_deriv_row(const PolyBasis& basis, const Eigen::MatrixBase<Derived>& x,
                                                    const MultiIndex& deriv) {
  RowVector<typename Derived::Scalar> row(basis.size());
  for (Eigen::Index k = 0; k < basis.size(); ++k) row(k) = eval_monomial_deriv(basis.indices[k], deriv, x);
  return row;
}

/// n x M matrix [p_k(X_i)].
template <typename Derived>
Matrix<typename Derived::Scalar> basis_matrix(const PolyBasis& basis, const Eigen::MatrixBase<Derived>& points) {
  Matrix<typename Derived::Scalar> out(points.rows(), basis.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = basis_row(basis, points.row(i));
  return out;
}

namespace detail {

// Rank is affine invariant on P_{m-1}; map each axis onto [-1, 1] first so the
// monomial matrix is not needlessly ill-conditioned.
template <typename Derived>
Eigen::Index scaled_monomial_rank(const PolyBasis& basis, const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  if (points.rows() == 0) return 0;
  Points<Scalar> u = points;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const Scalar lo = u.col(j).minCoeff();
    const Scalar hi = u.col(j).maxCoeff();
    const Scalar half = (hi - lo) / Scalar(2);
    const Scalar centre = (hi + lo) / Scalar(2);
    u.col(j).array() -= centre;
    if (half > Scalar(0)) u.col(j) /= half;
  }
  Matrix<Scalar> a = basis_matrix(basis, u);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= Scalar(0)) return 0;
  const Scalar tol = Scalar(1e-10) * sv(0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) rank += sv(k) > tol ? 1 : 0;
  return rank;
}

}  // namespace detail

/// True iff [p_k(x_j)] has full column rank M. Singular values below
/// 1e-10 * sigma_max count as zero.
template <typename Derived>
bool check_unisolvent(const Eigen::MatrixBase<Derived>& points, int m) {
  if (points.rows() == 0 || points.cols() == 0) return false;
  const int d = static_cast<int>(points.cols());
  if (2 * m <= d) return false;
  const PolyBasis basis = monomial_basis(m, d);
  if (points.rows() < basis.size()) return false;
  return detail::scaled_monomial_rank(basis, points) == basis.size();
}

/// Anchors s_1..s_M and cardinal coefficients: q_i(x) = sum_k cardinal(k, i) p_k(x).
template <typename Scalar>
struct AnchorSet {
  Points<Scalar> points;
  Matrix<Scalar> cardinal;

  Eigen::Index size() const { return points.rows(); }
};

/// Row [q_1(x) ... q_M(x)].
template <typename Scalar, typename Derived>
RowVector<Scalar> cardinal_row(const PolyBasis& basis, const AnchorSet<Scalar>& anchors,
                               const Eigen::MatrixBase<Derived>& x) {
  return basis_row(basis, x) * anchors.cardinal;
}

template <typename Scalar, typename Derived>
RowVector<Scalar> cardinal_deriv_row(const PolyBasis& basis, const AnchorSet<Scalar>& anchors,
                                     const Eigen::MatrixBase<Derived>& x, const MultiIndex& deriv) {
  return basis_deriv_row(basis, x, deriv) * anchors.cardinal;
}

/// Builds the cardinal polynomials for an explicit anchor set.
template <typename Scalar>
AnchorSet<Scalar> make_anchor_set(const PolyBasis& basis, Points<Scalar> points) {
  if (points.rows() != basis.size() || points.cols() != basis.d) {
    throw std::invalid_argument("make_anchor_set: expected " + std::to_string(basis.size()) + " points in R^" +
                                std::to_string(basis.d));
  }
  if (!check_unisolvent(points, basis.m)) throw UnisolvencyError("anchor points are not unisolvent");
  Matrix<Scalar> s = basis_matrix(basis, points);
  Eigen::FullPivLU<Matrix<Scalar>> lu(s);
  if (!lu.isInvertible()) throw UnisolvencyError("anchor monomial matrix is singular");
  return AnchorSet<Scalar>{std::move(points), lu.inverse()};
}

namespace detail {

// Points of the box in graded lattice order: corners, then the 3^d grid
// (edge midpoints before face centres before the centre), then successively
// dyadic refinements. Fractions are in [0, 1].
inline std::vector<std::vector<double>> graded_lattice(int d, std::size_t max_points) {
  std::vector<std::vector<double>> out;
  for (int level = 0;; ++level) {
    const long per_axis = (1L << level) + 1;
    long total = 1;
    for (int j = 0; j < d; ++j) total *= per_axis;
    if (level > 0 && (static_cast<std::size_t>(total) > max_points || level > 20)) break;

    struct Candidate {
      int fresh;
      std::vector<long> idx;
    };
    std::vector<Candidate> level_points;
    std::vector<long> idx(d, 0);
    for (long flat = 0; flat < total; ++flat) {
      long rest = flat;
      for (int j = d - 1; j >= 0; --j) {
        idx[j] = rest % per_axis;
        rest /= per_axis;
      }
      int fresh = 0;
      for (int j = 0; j < d; ++j) {
        // Odd index at this level means the coordinate first appears here.
        if (level > 0 && idx[j] % 2 == 1) ++fresh;
      }
      if (level > 0 && fresh == 0) continue;
      level_points.push_back({fresh, idx});
    }
    std::stable_sort(level_points.begin(), level_points.end(),
                     [](const Candidate& a, const Candidate& b) { return a.fresh < b.fresh; });
    for (const auto& c : level_points) {
      std::vector<double> frac(d);
      for (int j = 0; j < d; ++j) frac[j] = static_cast<double>(c.idx[j]) / static_cast<double>(per_axis - 1);
      out.push_back(std::move(frac));
    }
    if (out.size() >= max_points) break;
  }
  return out;
}

template <typename Scalar>
Points<Scalar> lattice_points(const std::vector<std::vector<double>>& fracs, const std::vector<std::size_t>& pick,
                              const Box<Scalar>& box, int d) {
  Points<Scalar> p(static_cast<Eigen::Index>(pick.size()), d);
  for (std::size_t r = 0; r < pick.size(); ++r) {
    for (int j = 0; j < d; ++j) p(r, j) = box.lo + Scalar(fracs[pick[r]][j]) * box.width();
  }
  return p;
}

}  // namespace detail

/// Deterministic unisolvent anchors inside the box. Tries the first M lattice
/// points, then a rank-greedy pass over the lattice, then seeded jitter.
template <typename Scalar>
AnchorSet<Scalar> choose_anchors(const Box<Scalar>& box, int m, int d) {
  if (!(box.hi > box.lo)) throw std::invalid_argument("choose_anchors: empty domain box");
  const PolyBasis basis = monomial_basis(m, d);
  const auto big_m = static_cast<std::size_t>(basis.size());
  const auto fracs = detail::graded_lattice(d, std::max<std::size_t>(64 * big_m, 4096));

  std::vector<std::size_t> first(big_m);
  std::iota(first.begin(), first.end(), std::size_t{0});
  Points<Scalar> pts = detail::lattice_points(fracs, first, box, d);
  if (check_unisolvent(pts, m)) return make_anchor_set(basis, std::move(pts));

  std::vector<std::size_t> chosen;
  Eigen::Index rank = 0;
  for (std::size_t c = 0; c < fracs.size() && chosen.size() < big_m; ++c) {
    chosen.push_back(c);
    const Eigen::Index r = detail::scaled_monomial_rank(basis, detail::lattice_points(fracs, chosen, box, d));
    if (r > rank) {
      rank = r;
    } else {
      chosen.pop_back();
    }
  }
  if (chosen.size() == big_m) return make_anchor_set(basis, detail::lattice_points(fracs, chosen, box, d));

  std::mt19937_64 gen(0x5eedULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    Points<Scalar> jittered = detail::lattice_points(fracs, first, box, d);
    for (Eigen::Index i = 0; i < jittered.rows(); ++i) {
      for (Eigen::Index j = 0; j < jittered.cols(); ++j) {
        Scalar v = jittered(i, j) + Scalar(1e-3) * box.width() * Scalar(unit(gen));
        jittered(i, j) = std::clamp(v, box.lo, box.hi);
      }
    }
    if (check_unisolvent(jittered, m)) return make_anchor_set(basis, std::move(jittered));
  }
  throw UnisolvencyError("choose_anchors: no unisolvent anchor set found");
}

}  // namespace tps
