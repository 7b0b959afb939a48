#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "reidforge/tensor.hpp"

namespace reidforge {

// Compares the reverse-mode gradient of a scalar-valued tensor function
// against central finite differences, entry by entry. Returns the maximum
// relative error with denominator max(|analytic|, |numeric|, 1e-8).
template <class Scalar>
Scalar grad_check(const std::function<TensorT<Scalar>(const TensorT<Scalar>&)>& f,
                  const TensorT<Scalar>& x, Scalar eps) {
  if (!(eps > Scalar(0))) throw NumericError("grad_check: eps must be > 0");

  TensorT<Scalar> probe(x.value(), /*requires_grad=*/true);
  TensorT<Scalar> out = f(probe);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("grad_check: f must return a 1x1 tensor, got " +
                     out.shape_str());
  }
  if (!std::isfinite(static_cast<double>(out.scalar()))) {
    throw NumericError("grad_check: non-finite function value");
  }
  backward(out);
  DenseMatrix<Scalar> analytic = probe.grad();

  Scalar max_rel = Scalar(0);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      DenseMatrix<Scalar> vp = x.value(), vm = x.value();
      vp(i, j) += eps;
      vm(i, j) -= eps;
      Scalar fp = f(TensorT<Scalar>(vp)).scalar();
      Scalar fm = f(TensorT<Scalar>(vm)).scalar();
      if (!std::isfinite(static_cast<double>(fp)) ||
          !std::isfinite(static_cast<double>(fm))) {
        throw NumericError("grad_check: non-finite value at perturbed point");
      }
      Scalar numeric = (fp - fm) / (Scalar(2) * eps);
      Scalar a = analytic(i, j);
      if (!std::isfinite(static_cast<double>(a))) {
        throw NumericError("grad_check: non-finite analytic gradient");
      }
      Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace reidforge
