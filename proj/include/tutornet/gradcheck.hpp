#pragma once

// Central-difference gradient verification for scalar-valued functions.

#include <cmath>
#include <functional>
#include <limits>

#include "tutornet/tensor.hpp"

namespace tutornet {

using ScalarFn = std::function<Tensor(const Tensor&)>;

namespace detail {

inline double fd_numeric(const ScalarFn& f, const Tensor& x, std::int64_t i, double eps) {
  NoGradGuard ng;
  Tensor xp = x.detach();
  Tensor xm = x.detach();
  xp.mutable_values()[i] += eps;
  xm.mutable_values()[i] -= eps;
  return (f(xp).item() - f(xm).item()) / (2.0 * eps);
}

inline double rel_err(double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric))
    return std::numeric_limits<double>::infinity();
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace detail

// Max over coordinates of |analytic - numeric| / max(1, |numeric|).
// Non-finite values anywhere surface as +infinity.
inline double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps) {
  Tensor leaf = Tensor::from(x.shape(), x.values(), /*requires_grad=*/true);
  Tensor y = f(leaf);
  if (y.numel() != 1) throw TensorError("finite_difference_check: f must return a scalar");
  if (!std::isfinite(y.item())) return std::numeric_limits<double>::infinity();
  y.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) analytic = leaf.grad();
  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i)
    worst = std::max(worst, detail::rel_err(analytic[i], detail::fd_numeric(f, x, i, eps)));
  return worst;
}

// Same check restricted to a coordinate sample; keeps large-parameter
// checks affordable (one backward, 2|coords| forwards).
inline double finite_difference_check_sampled(const ScalarFn& f, const Tensor& x,
                                              double eps,
                                              const std::vector<std::int64_t>& coords) {
  Tensor leaf = Tensor::from(x.shape(), x.values(), /*requires_grad=*/true);
  Tensor y = f(leaf);
  if (y.numel() != 1) throw TensorError("finite_difference_check: f must return a scalar");
  if (!std::isfinite(y.item())) return std::numeric_limits<double>::infinity();
  y.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) analytic = leaf.grad();
  double worst = 0.0;
  for (std::int64_t i : coords)
    worst = std::max(worst, detail::rel_err(analytic[i], detail::fd_numeric(f, x, i, eps)));
  return worst;
}

}  // namespace tutornet
