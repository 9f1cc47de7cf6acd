#pragma once

// Design matrices and the penalized linear system
//   (R + s*lambda*I) d + P c = Y,   P^T d = 0,
// where s is the sample count in the E_n + lambda*J normalisation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include "tpspline/basis.hpp"
#include "tpspline/errors.hpp"
#include "tpspline/kernel.hpp"

namespace tps {

template <typename Scalar>
struct DesignMatrices {
  Matrix<Scalar> kernel;  // R(X_i, X_j), symmetric
  Matrix<Scalar> poly;    // p_k(X_i)

  Eigen::Index n() const { return kernel.rows(); }
  Eigen::Index basis_size() const { return poly.cols(); }
};

template <typename Scalar>
struct Coefficients {
  Vector<Scalar> poly;    // c
  Vector<Scalar> kernel;  // d
  bool ridge_fallback = false;
};

template <typename Derived>
void check_distinct(const Eigen::MatrixBase<Derived>& points) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if ((points.row(i) - points.row(j)).squaredNorm() == 0) {
        throw DuplicatePointsError(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
      }
    }
  }
}

/// n x M matrix of cardinal polynomials q_a(X_i).
template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> cardinal_matrix(const Eigen::MatrixBase<Derived>& points, const KernelSpec<Scalar>& spec) {
  return basis_matrix(spec.basis, points) * spec.anchors.cardinal;
}

/// n x M matrix K_m(X_i - s_a).
template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> anchor_kernel_matrix(const Eigen::MatrixBase<Derived>& points, const KernelSpec<Scalar>& spec) {
  Matrix<Scalar> out(points.rows(), spec.anchors.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = anchor_kernel_row(spec, points.row(i));
  return out;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
DesignMatrices<Scalar> assemble(const Eigen::MatrixBase<Derived>& points, const KernelSpec<Scalar>& spec) {
  if (points.cols() != spec.d) throw std::invalid_argument("assemble: point dimension does not match kernel");
  check_distinct(points);
  const Eigen::Index n = points.rows();
  const Matrix<Scalar> q = cardinal_matrix(points, spec);
  const Matrix<Scalar> kxs = anchor_kernel_matrix(points, spec);
  Matrix<Scalar> kxx(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    kxx(i, i) = Scalar(0);
    for (Eigen::Index j = 0; j < i; ++j) {
      kxx(i, j) = k_m(points.row(i) - points.row(j), spec);
      kxx(j, i) = kxx(i, j);
    }
  }
  Matrix<Scalar> r = spec.sign * (kxx - kxs * q.transpose() - q * kxs.transpose() + q * spec.anchor_kernel * q.transpose());
  DesignMatrices<Scalar> dm;
  dm.kernel = Scalar(0.5) * (r + r.transpose());
  dm.poly = basis_matrix(spec.basis, points);
  return dm;
}

namespace detail {

template <typename Scalar>
using WideScalar = std::conditional_t<std::is_floating_point_v<Scalar>, long double, Scalar>;

// Solves [[R + diag*I, P], [P^T, 0]] [d; c] = [y; 0] by the null-space method
// in working precision W: with P Pi = [Q1 Q2] [T; 0], d = Q1 T^{-T} Pi^T g + Q2 z
// where Q2^T (R + diag*I) Q2 z = Q2^T (f - (R + diag*I) d0), and c follows from
// the first block row. The reduced matrix is positive definite for unisolvent
// points, and the kernel block and border never share a pivot.
template <typename W, typename Scalar>
bool bordered_solve_in(const Matrix<Scalar>& kernel_s, const Matrix<Scalar>& poly_s, const Vector<Scalar>& y_s,
                       Scalar diag_s, Coefficients<Scalar>& out) {
  const Matrix<W> kernel = kernel_s.template cast<W>();
  const Matrix<W> poly = poly_s.template cast<W>();
  const Vector<W> y = y_s.template cast<W>();
  const W diag(diag_s);
  const Eigen::Index n = kernel.rows();
  const Eigen::Index big_m = poly.cols();
  Eigen::ColPivHouseholderQR<Matrix<W>> qr(poly);
  if (qr.rank() < big_m) return false;
  const Matrix<W> q = qr.householderQ() * Matrix<W>::Identity(n, n);
  const Matrix<W> q1 = q.leftCols(big_m);
  const Matrix<W> q2 = q.rightCols(n - big_m);
  const auto t = qr.matrixR().topLeftCorner(big_m, big_m).template triangularView<Eigen::Upper>();
  Matrix<W> a = kernel;
  a.diagonal().array() += diag;
  Matrix<W> reduced = q2.transpose() * a * q2;
  reduced = W(0.5) * (reduced + reduced.transpose());
  const Eigen::LDLT<Matrix<W>> ldlt(reduced);
  if (ldlt.info() != Eigen::Success) return false;

  // One pass of the factored solve for a general right-hand side [f; g].
  auto solve = [&](const Vector<W>& f, const Vector<W>& g, Vector<W>& d, Vector<W>& c) {
    const Vector<W> pg = qr.colsPermutation().transpose() * g;
    d = q1 * t.transpose().solve(pg);
    if (n > big_m) d += q2 * ldlt.solve(Vector<W>(q2.transpose() * (f - a * d)));
    c = qr.colsPermutation() * Vector<W>(t.solve(Vector<W>(q1.transpose() * (f - a * d))));
  };

  // Residuals are accumulated in extended precision where available.
  using Wide = WideScalar<W>;
  const Matrix<Wide> kernel_w = kernel.template cast<Wide>();
  const Matrix<Wide> poly_w = poly.template cast<Wide>();
  const Vector<Wide> y_w = y.template cast<Wide>();
  auto residual = [&](const Vector<W>& d, const Vector<W>& c, Vector<W>& r1, Vector<W>& r2) {
    const Vector<Wide> dw = d.template cast<Wide>();
    r1 = (kernel_w * dw + Wide(diag) * dw + poly_w * c.template cast<Wide>() - y_w).template cast<W>();
    r2 = (poly_w.transpose() * dw).template cast<W>();
    return std::sqrt(r1.squaredNorm() + r2.squaredNorm());
  };

  // Iterative refinement: |d| is large near lambda = 0 and a single solve
  // leaves about eps*|R|*|d| behind.
  Vector<W> d, c, r1, r2;
  solve(y, Vector<W>::Zero(big_m), d, c);
  if (!d.allFinite() || !c.allFinite()) return false;
  const W target = W(1e-8) * std::max(y.norm(), std::numeric_limits<W>::min());
  W res = residual(d, c, r1, r2);
  for (int step = 0; step < 5 && r1.norm() > W(1e-3) * target; ++step) {
    Vector<W> dd, dc, s1, s2;
    solve(r1, r2, dd, dc);
    const Vector<W> d_next = d - dd, c_next = c - dc;
    if (!d_next.allFinite() || !c_next.allFinite()) break;
    const W res_next = residual(d_next, c_next, s1, s2);
    if (res_next >= res) break;
    d = d_next;
    c = c_next;
    r1 = s1;
    r2 = s2;
    res = res_next;
  }
  // Accept the coefficients as rounded to the caller's precision, with the
  // residual itself accumulated wide so that it measures the stored solution
  // rather than the rounding of the check. The orthogonality block is judged
  // relative to |d| |P|: once |d| is large, rounding d alone breaks an
  // absolute bound.
  out.kernel = d.template cast<Scalar>();
  out.poly = c.template cast<Scalar>();
  const Scalar y_norm = std::max(y_s.norm(), std::numeric_limits<Scalar>::min());
  Vector<W> stored_r1, stored_r2;
  residual(out.kernel.template cast<W>(), out.poly.template cast<W>(), stored_r1, stored_r2);
  const auto e1 = static_cast<Scalar>(stored_r1.norm());
  const Scalar e2 = (poly_s.transpose() * out.kernel).norm();
  return r1.norm() <= target && e1 <= Scalar(1e-8) * y_norm &&
         e2 <= Scalar(1e-7) * out.kernel.norm() * poly_s.norm() + Scalar(1e-8) * y_norm;
}

// Working precision first, then extended precision for the badly conditioned
// small-lambda end.
template <typename Scalar>
bool bordered_solve(const Matrix<Scalar>& kernel, const Matrix<Scalar>& poly, const Vector<Scalar>& y, Scalar diag,
                    Coefficients<Scalar>& out) {
  if (bordered_solve_in<Scalar>(kernel, poly, y, diag, out)) return true;
  if constexpr (!std::is_same_v<WideScalar<Scalar>, Scalar>) return bordered_solve_in<WideScalar<Scalar>>(kernel, poly, y, diag, out);
  return false;
}

}  // namespace detail

/// Solves the bordered system. If it is numerically singular, retries once with a ridge of 1e-10 * trace(R) / n on the R block.
/// `scale` is the sample count multiplying lambda (defaults to n).
template <typename Scalar>
Coefficients<Scalar> solve_penalized(const DesignMatrices<Scalar>& dm, const Vector<Scalar>& y, Scalar lambda,
                                     Scalar scale = Scalar(-1)) {
  if (lambda < Scalar(0)) throw std::invalid_argument("solve_penalized: lambda must be nonnegative");
  if (y.size() != dm.n()) throw std::invalid_argument("solve_penalized: response length mismatch");
  if (scale < Scalar(0)) scale = Scalar(dm.n());
  Coefficients<Scalar> out;
  const Scalar diag = scale * lambda;
  if (detail::bordered_solve(dm.kernel, dm.poly, y, diag, out)) return out;
  const Scalar ridge = Scalar(1e-10) * dm.kernel.trace() / Scalar(dm.n());
  if (detail::bordered_solve(dm.kernel, dm.poly, y, diag + ridge, out)) {
    out.ridge_fallback = true;
    return out;
  }
  throw SingularSystemError("penalized system is numerically singular (n=" + std::to_string(dm.n()) +
                            ", lambda=" + std::to_string(static_cast<double>(lambda)) + ")");
}

/// Whole lambda-path of the penalized problem from one decomposition.
///
/// With P = [Q1 Q2] [T; 0] and Q2^T R Q2 = V diag(e) V^T, the kernel
/// coefficients are d = Q2 V a with a_k = w_k / (e_k + s*lambda), w = V^T Q2^T Y.
/// Then J = sum e_k a_k^2 and the residual vector is s*lambda*d.
template <typename Scalar>
class PenaltyPath {
public:
  PenaltyPath(const Matrix<Scalar>& kernel, const Matrix<Scalar>& poly, const Vector<Scalar>& y, Scalar scale)
    : kernel_(kernel), y_(y), scale_(scale), qr_(poly) {
    const Eigen::Index n = kernel.rows();
    const Eigen::Index big_m = poly.cols();
    qr_.setThreshold(Scalar(1e-12));
    if (qr_.rank() < big_m) throw UnisolvencyError("design points are not unisolvent for P_{m-1}");
    const Matrix<Scalar> q = qr_.householderQ() * Matrix<Scalar>::Identity(n, n);
    const Matrix<Scalar> q2 = q.rightCols(n - big_m);
    Matrix<Scalar> reduced = q2.transpose() * kernel * q2;
    reduced = Scalar(0.5) * (reduced + reduced.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(reduced);
    eig_ = es.eigenvalues().cwiseMax(Scalar(0));
    basis_ = q2 * es.eigenvectors();
    w_ = basis_.transpose() * y;
  }

  PenaltyPath(const DesignMatrices<Scalar>& dm, const Vector<Scalar>& y)
    : PenaltyPath(dm.kernel, dm.poly, y, Scalar(dm.n())) {}

  Eigen::Index n() const { return y_.size(); }

  /// J(f_lambda).
  Scalar roughness(Scalar lambda) const {
    Scalar j(0);
    for (Eigen::Index k = 0; k < eig_.size(); ++k) {
      const Scalar a = w_(k) / (eig_(k) + scale_ * lambda);
      j += eig_(k) * a * a;
    }
    return j;
  }

  /// E_n(f_lambda) = (1/n) |Y - fitted|^2.
  Scalar mean_sq_residual(Scalar lambda) const {
    if (lambda == Scalar(0)) return Scalar(0);
    Scalar s(0);
    const Scalar sl = scale_ * lambda;
    for (Eigen::Index k = 0; k < eig_.size(); ++k) {
      const Scalar r = sl * w_(k) / (eig_(k) + sl);
      s += r * r;
    }
    return s / Scalar(n());
  }

  Scalar interpolant_roughness() const { return roughness(Scalar(0)); }
  Scalar polynomial_residual() const { return w_.squaredNorm() / Scalar(n()); }

  Coefficients<Scalar> coefficients(Scalar lambda) const {
    Vector<Scalar> a(eig_.size());
    for (Eigen::Index k = 0; k < eig_.size(); ++k) a(k) = w_(k) / (eig_(k) + scale_ * lambda);
    Coefficients<Scalar> out;
    out.kernel = basis_ * a;
    const Vector<Scalar> rhs = y_ - kernel_ * out.kernel - scale_ * lambda * out.kernel;
    out.poly = qr_.solve(rhs);
    return out;
  }

  const Vector<Scalar>& eigenvalues() const { return eig_; }

private:
  Matrix<Scalar> kernel_;
  Vector<Scalar> y_;
  Scalar scale_;
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr_;
  Vector<Scalar> eig_;
  Matrix<Scalar> basis_;  // Q2 V
  Vector<Scalar> w_;
};

}  // namespace tps
