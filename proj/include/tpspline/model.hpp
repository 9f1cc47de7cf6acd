#pragma once

#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "tpspline/basis.hpp"
#include "tpspline/kernel.hpp"
#include "tpspline/system.hpp"

namespace tps {

/// Smoothness order, domain box, and the kernel built on a fixed anchor set.
template <typename Scalar>
struct SplineSetup {
  Box<Scalar> domain;
  KernelSpec<Scalar> kernel;

  int m() const { return kernel.m; }
  int d() const { return kernel.d; }
  const PolyBasis& basis() const { return kernel.basis; }
  Eigen::Index basis_size() const { return kernel.basis.size(); }
};

template <typename Scalar>
SplineSetup<Scalar> make_setup(int m, int d, const Box<Scalar>& domain) {
  return SplineSetup<Scalar>{domain, make_kernel_spec(m, d, domain)};
}

template <typename Scalar>
SplineSetup<Scalar> make_setup(int m, const Box<Scalar>& domain, Points<Scalar> anchors) {
  const int d = static_cast<int>(anchors.cols());
  return SplineSetup<Scalar>{domain, make_kernel_spec(m, make_anchor_set(monomial_basis(m, d), std::move(anchors)))};
}

template <typename Scalar>
struct Dataset {
  Points<Scalar> x;
  Vector<Scalar> y;

  Eigen::Index size() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
};

/// f(x) = sum_k c_k p_k(x) + sum_i d_i R(x, X_i).
template <typename Scalar>
class SplineModel {
public:
  SplineModel(SplineSetup<Scalar> setup, Points<Scalar> knots, Vector<Scalar> poly_coeffs,
              Vector<Scalar> kernel_coeffs, Scalar lambda, Scalar fit_roughness, Scalar fit_residual)
    : setup_(std::move(setup)), knots_(std::move(knots)), c_(std::move(poly_coeffs)), d_(std::move(kernel_coeffs)),
      lambda_(lambda), fit_roughness_(fit_roughness), fit_residual_(fit_residual) {
    if (c_.size() != setup_.basis_size()) throw std::invalid_argument("SplineModel: polynomial coefficient count != M");
    if (d_.size() != knots_.rows()) throw std::invalid_argument("SplineModel: kernel coefficient count != knot count");
    if (knots_.rows() > 0 && knots_.cols() != setup_.d()) throw std::invalid_argument("SplineModel: knot dimension");
    knot_cardinal_ = cardinal_matrix(knots_, setup_.kernel);
    knot_anchor_kernel_ = anchor_kernel_matrix(knots_, setup_.kernel);
  }

  const SplineSetup<Scalar>& setup() const { return setup_; }
  const Points<Scalar>& knots() const { return knots_; }
  const Vector<Scalar>& poly_coeffs() const { return c_; }
  const Vector<Scalar>& kernel_coeffs() const { return d_; }
  Scalar lambda() const { return lambda_; }
  /// J and E_n recorded when the model was fitted.
  Scalar fit_roughness() const { return fit_roughness_; }
  Scalar fit_residual() const { return fit_residual_; }

  /// Column [R(x, X_i)]_i.
  template <typename Derived>
  Vector<Scalar> kernel_column(const Eigen::MatrixBase<Derived>& x) const {
    const auto& spec = setup_.kernel;
    const RowVector<Scalar> xr = as_row(x);
    Vector<Scalar> kx(knots_.rows());
    for (Eigen::Index i = 0; i < knots_.rows(); ++i) kx(i) = k_m(xr - knots_.row(i), spec);
    const RowVector<Scalar> ks = anchor_kernel_row(spec, xr);
    const RowVector<Scalar> qx = cardinal_row(spec.basis, spec.anchors, xr);
    return spec.sign * (kx - knot_cardinal_ * ks.transpose() - knot_anchor_kernel_ * qx.transpose() +
                        knot_cardinal_ * spec.anchor_kernel * qx.transpose());
  }

  /// Column [D^alpha_x R(x, X_i)]_i.
  template <typename Derived>
  Vector<Scalar> kernel_deriv_column(const Eigen::MatrixBase<Derived>& x, const MultiIndex& alpha) const {
    const auto& spec = setup_.kernel;
    const RowVector<Scalar> xr = as_row(x);
    Vector<Scalar> kx(knots_.rows());
    for (Eigen::Index i = 0; i < knots_.rows(); ++i) kx(i) = k_m_deriv(xr - knots_.row(i), alpha, spec);
    const RowVector<Scalar> ks = anchor_kernel_deriv_row(spec, xr, alpha);
    const RowVector<Scalar> qx = cardinal_deriv_row(spec.basis, spec.anchors, xr, alpha);
    return spec.sign * (kx - knot_cardinal_ * ks.transpose() - knot_anchor_kernel_ * qx.transpose() +
                        knot_cardinal_ * spec.anchor_kernel * qx.transpose());
  }

private:
  SplineSetup<Scalar> setup_;
  Points<Scalar> knots_;
  Vector<Scalar> c_;
  Vector<Scalar> d_;
  Scalar lambda_;
  Scalar fit_roughness_;
  Scalar fit_residual_;
  Matrix<Scalar> knot_cardinal_;
  Matrix<Scalar> knot_anchor_kernel_;
};

template <typename Scalar, typename Derived>
Scalar eval(const SplineModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != model.setup().d()) throw std::invalid_argument("eval: point dimension mismatch");
  Scalar v = basis_row(model.setup().basis(), x).dot(model.poly_coeffs());
  if (model.knots().rows() > 0) v += model.kernel_column(x).dot(model.kernel_coeffs());
  return v;
}

template <typename Scalar, typename Derived>
Scalar eval_deriv(const SplineModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, const MultiIndex& alpha) {
  if (x.size() != model.setup().d()) throw std::invalid_argument("eval_deriv: point dimension mismatch");
  detail::check_order(model.setup().kernel, alpha);
  if (alpha.order() == 0) return eval(model, x);
  Scalar v = basis_deriv_row(model.setup().basis(), x, alpha).dot(model.poly_coeffs());
  if (model.knots().rows() > 0) v += model.kernel_deriv_column(x, alpha).dot(model.kernel_coeffs());
  return v;
}

/// Values at every row of `points`.
template <typename Scalar, typename Derived>
Vector<Scalar> eval_many(const SplineModel<Scalar>& model, const Eigen::MatrixBase<Derived>& points) {
  Vector<Scalar> out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = eval(model, points.row(i));
  return out;
}

template <typename Scalar, typename Derived>
bool in_domain(const SplineModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  const auto& box = model.setup().domain;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) < box.lo || x(j) > box.hi) return false;
  }
  return true;
}

/// True when x sits on a knot or anchor where D^alpha R has no finite limit;
/// eval_deriv returns the zero convention there.
template <typename Scalar, typename Derived>
bool derivative_singular_at(const SplineModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                            const MultiIndex& alpha) {
  const auto& spec = model.setup().kernel;
  const RowVector<Scalar> xr = as_row(x);
  for (Eigen::Index i = 0; i < model.knots().rows(); ++i)
    if (derivative_singular(spec, Scalar((xr - model.knots().row(i)).norm()), alpha.order())) return true;
  for (Eigen::Index a = 0; a < spec.anchors.size(); ++a)
    if (derivative_singular(spec, Scalar((xr - spec.anchors.points.row(a)).norm()), alpha.order())) return true;
  return false;
}

/// d^T [R(X_i, X_j)] d; tiny negative rounding is clamped to zero.
template <typename Scalar>
Scalar j_value(const SplineModel<Scalar>& model) {
  if (model.knots().rows() == 0) return Scalar(0);
  const DesignMatrices<Scalar> dm = assemble(model.knots(), model.setup().kernel);
  const Scalar j = model.kernel_coeffs().dot(dm.kernel * model.kernel_coeffs());
  if (j < Scalar(0) && j >= Scalar(-1e-8)) return Scalar(0);
  return j;
}

template <typename Scalar>
Scalar e_n(const SplineModel<Scalar>& model, const Dataset<Scalar>& data) {
  if (data.dim() != model.setup().d()) throw std::invalid_argument("e_n: data dimension mismatch");
  if (data.size() == 0) return Scalar(0);
  return (data.y - eval_many(model, data.x)).squaredNorm() / Scalar(data.size());
}

}  // namespace tps
