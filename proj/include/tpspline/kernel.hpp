#pragma once

// Radial kernel K_m(z) = theta * |z|^(2m-d) [* ln|z| when 2m-d is even], and the
// reproducing kernel R(s,t) obtained by projecting K_m off P_{m-1} through the
// anchor cardinal polynomials. Derivatives are taken in the first argument.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "tpspline/basis.hpp"
#include "tpspline/errors.hpp"

namespace tps {

/// Gamma function; uses reflection for arguments below 1/2 so negative
/// half-integers are evaluated from positive ones.
template <typename Scalar>
Scalar gamma_function(Scalar z) {
  using std::sin;
  using std::tgamma;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  if (z < Scalar(0.5)) return pi / (sin(pi * z) * gamma_function(Scalar(1) - z));
  return tgamma(z);
}

namespace detail {

template <typename Scalar>
Scalar factorial(int k) {
  Scalar f(1);
  for (int i = 2; i <= k; ++i) f *= Scalar(i);
  return f;
}

}  // namespace detail

template <typename Scalar = double>
Scalar theta(int m, int d) {
  if (m < 1 || d < 1) throw std::invalid_argument("theta: m and d must be positive");
  if (2 * m <= d) throw std::domain_error("theta: need 2m > d");
  using std::pow;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar pi_pow = pow(pi, Scalar(d) / Scalar(2));
  if (d % 2 == 0) {
    const Scalar sign = ((d / 2 + 1) % 2 == 0) ? Scalar(1) : Scalar(-1);
    return sign / (pow(Scalar(2), Scalar(2 * m - 1)) * pi_pow * detail::factorial<Scalar>(m - 1) *
                   detail::factorial<Scalar>(m - d / 2));
  }
  const Scalar sign = (m % 2 == 0) ? Scalar(1) : Scalar(-1);
  return sign * gamma_function(Scalar(d) / Scalar(2) - Scalar(m)) /
         (pow(Scalar(2), Scalar(2 * m)) * pi_pow * detail::factorial<Scalar>(m - 1));
}

template <typename Scalar>
struct KernelSpec {
  int m = 0;
  int d = 0;
  Scalar theta = Scalar(0);
  bool even = false;        // 2m - d even: logarithmic branch
  int power = 0;            // 2m - d
  Scalar sign = Scalar(1);  // (-1)^m
  PolyBasis basis;
  AnchorSet<Scalar> anchors;
  Matrix<Scalar> anchor_kernel;  // K_m(s_i - s_j)

  /// Highest |alpha| for which derivatives are provided.
  int max_derivative_order() const { return d == 1 ? 2 * m - 2 : 2; }
};

namespace detail {

// Radial profile g(r) and its first two derivatives.
template <typename Scalar>
Scalar radial(const KernelSpec<Scalar>& spec, Scalar r, int order) {
  using std::log;
  using std::pow;
  if (r == Scalar(0)) return Scalar(0);
  const int p = spec.power;
  const Scalar th = spec.theta;
  if (!spec.even) {
    Scalar coef(1);
    for (int k = 0; k < order; ++k) coef *= Scalar(p - k);
    return th * coef * pow(r, Scalar(p - order));
  }
  const Scalar lr = log(r);
  switch (order) {
    case 0: return th * pow(r, Scalar(p)) * lr;
    case 1: return th * pow(r, Scalar(p - 1)) * (Scalar(p) * lr + Scalar(1));
    case 2: return th * pow(r, Scalar(p - 2)) * (Scalar(p * (p - 1)) * lr + Scalar(2 * p - 1));
    default: throw UnsupportedDerivativeError("radial: order above 2");
  }
}

template <typename Scalar>
void check_order(const KernelSpec<Scalar>& spec, const MultiIndex& alpha) {
  if (alpha.dim() != spec.d) throw std::invalid_argument("derivative multi-index has wrong dimension");
  if (alpha.order() > spec.max_derivative_order()) {
    throw UnsupportedDerivativeError("derivative order " + std::to_string(alpha.order()) +
                                     " unsupported for m=" + std::to_string(spec.m) +
                                     ", d=" + std::to_string(spec.d) + " (max " +
                                     std::to_string(spec.max_derivative_order()) + ")");
  }
}

}  // namespace detail

template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar k_m(const Eigen::MatrixBase<Derived>& z, const KernelSpec<Scalar>& spec) {
  return detail::radial(spec, Scalar(z.norm()), 0);
}

/// D^alpha K_m(z). At z = 0 the continuous extension is used (0 for orders
/// below 2m-d); orders at or above 2m-d are singular there and also return 0.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar k_m_deriv(const Eigen::MatrixBase<Derived>& z, const MultiIndex& alpha, const KernelSpec<Scalar>& spec) {
  detail::check_order(spec, alpha);
  const int order = alpha.order();
  if (order == 0) return k_m(z, spec);
  using std::abs;
  using std::pow;

  if (spec.d == 1) {
    // theta |z|^p with p odd: piecewise polynomial.
    const Scalar x = z(0);
    if (x == Scalar(0)) return Scalar(0);
    const int p = spec.power;
    Scalar coef(1);
    for (int k = 0; k < order; ++k) coef *= Scalar(p - k);
    const Scalar sgn = (x > Scalar(0) || order % 2 == 0) ? Scalar(1) : Scalar(-1);
    return spec.theta * coef * pow(abs(x), Scalar(p - order)) * sgn;
  }

  const Scalar r = z.norm();
  if (r == Scalar(0)) return Scalar(0);
  const Scalar g1 = detail::radial(spec, r, 1);
  if (order == 1) {
    int j = 0;
    while (alpha[j] == 0) ++j;
    return g1 * z(j) / r;
  }
  int j = 0;
  while (alpha[j] == 0) ++j;
  int k = j;
  if (alpha[j] == 1) {
    k = j + 1;
    while (alpha[k] == 0) ++k;
  }
  const Scalar g2 = detail::radial(spec, r, 2);
  const Scalar uj = z(j) / r;
  const Scalar uk = z(k) / r;
  const Scalar delta = (j == k) ? Scalar(1) : Scalar(0);
  return g2 * uj * uk + g1 / r * (delta - uj * uk);
}

/// True when D^alpha K_m has no finite limit at radius r (diagnostics only).
template <typename Scalar>
bool derivative_singular(const KernelSpec<Scalar>& spec, Scalar r, int order) {
  using std::abs;
  return abs(r) <= Scalar(1e-12) && order > 0 && order >= spec.power;
}

template <typename Scalar>
KernelSpec<Scalar> make_kernel_spec(int m, AnchorSet<Scalar> anchors) {
  const int d = static_cast<int>(anchors.points.cols());
  KernelSpec<Scalar> spec;
  spec.m = m;
  spec.d = d;
  spec.basis = monomial_basis(m, d);
  spec.theta = theta<Scalar>(m, d);
  spec.power = 2 * m - d;
  spec.even = spec.power % 2 == 0;
  spec.sign = (m % 2 == 0) ? Scalar(1) : Scalar(-1);
  if (anchors.size() != spec.basis.size()) throw std::invalid_argument("make_kernel_spec: anchor count != M");
  spec.anchors = std::move(anchors);
  const Eigen::Index big_m = spec.anchors.size();
  spec.anchor_kernel.resize(big_m, big_m);
  for (Eigen::Index i = 0; i < big_m; ++i) {
    for (Eigen::Index j = 0; j < big_m; ++j) {
      spec.anchor_kernel(i, j) = k_m(spec.anchors.points.row(i) - spec.anchors.points.row(j), spec);
    }
  }
  return spec;
}

template <typename Scalar>
KernelSpec<Scalar> make_kernel_spec(int m, int d, const Box<Scalar>& domain) {
  return make_kernel_spec(m, choose_anchors(domain, m, d));
}

/// Row [K_m(x - s_1) ... K_m(x - s_M)].
template <typename Scalar, typename Derived>
RowVector<Scalar> anchor_kernel_row(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& x) {
  RowVector<Scalar> row(spec.anchors.size());
  const RowVector<Scalar> xr = as_row(x);
  for (Eigen::Index a = 0; a < row.size(); ++a) row(a) = k_m(xr - spec.anchors.points.row(a), spec);
  return row;
}

template <typename Scalar, typename Derived>
RowVector<Scalar> anchor_kernel_deriv_row(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& x,
                                          const MultiIndex& alpha) {
  RowVector<Scalar> row(spec.anchors.size());
  const RowVector<Scalar> xr = as_row(x);
  for (Eigen::Index a = 0; a < row.size(); ++a) row(a) = k_m_deriv(xr - spec.anchors.points.row(a), alpha, spec);
  return row;
}

template <typename DerivedS, typename DerivedT, typename Scalar = typename DerivedS::Scalar>
Scalar r_kernel(const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedT>& t,
                const KernelSpec<Scalar>& spec) {
  const RowVector<Scalar> qs = cardinal_row(spec.basis, spec.anchors, s);
  const RowVector<Scalar> qt = cardinal_row(spec.basis, spec.anchors, t);
  const RowVector<Scalar> ks = anchor_kernel_row(spec, s);
  const RowVector<Scalar> kt = anchor_kernel_row(spec, t);
  return spec.sign * (k_m(as_row(s) - as_row(t), spec) - qt.dot(ks) - qs.dot(kt) + (qs * spec.anchor_kernel * qt.transpose())(0, 0));
}

/// D^alpha_s R(s, t).
template <typename DerivedS, typename DerivedT, typename Scalar = typename DerivedS::Scalar>
Scalar r_kernel_deriv(const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedT>& t,
                      const MultiIndex& alpha, const KernelSpec<Scalar>& spec) {
  detail::check_order(spec, alpha);
  if (alpha.order() == 0) return r_kernel(s, t, spec);
  const RowVector<Scalar> dqs = cardinal_deriv_row(spec.basis, spec.anchors, s, alpha);
  const RowVector<Scalar> qt = cardinal_row(spec.basis, spec.anchors, t);
  const RowVector<Scalar> dks = anchor_kernel_deriv_row(spec, s, alpha);
  const RowVector<Scalar> kt = anchor_kernel_row(spec, t);
  return spec.sign *
         (k_m_deriv(as_row(s) - as_row(t), alpha, spec) - qt.dot(dks) - dqs.dot(kt) + (dqs * spec.anchor_kernel * qt.transpose())(0, 0));
}

}  // namespace tps
