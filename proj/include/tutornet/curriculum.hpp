#pragma once

// Error-driven curriculum: weight activation, tutoring loss with its
// analytic gradient, and the weighted regression loss. Gradients are
// hard-blocked at two boundaries: the error map never reaches the main
// network, and the weight map is frozen inside main_loss, so each network
// optimizes only its own objective.

#include <algorithm>
#include <cmath>

#include "tutornet/density.hpp"
#include "tutornet/tensor.hpp"

namespace tutornet {

struct CurriculumParams {
  double t_floor = 0.5;        // weight assigned to easy pixels
  double margin = 0.8;         // error margin M, in scaled density space
  double scale_factor = 1000.0;
  double alpha_tutor = 1e-3;
  double alpha_main = 1e-2;

  void validate() const {
    if (!(t_floor > 0.0 && t_floor < 1.0))
      throw SceneError("t_floor must lie in (0, 1)");
    if (!(margin > 0.0)) throw SceneError("margin must be positive");
    if (!(scale_factor > 0.0)) throw SceneError("scale_factor must be positive");
    if (!(alpha_tutor > 0.0 && alpha_main > 0.0))
      throw SceneError("learning rates must be positive");
  }
};

struct WeightMap {
  Tensor grid;  // 1 x 1 x h x w, values in [min(T, 0.5), 1)
};

struct ErrorMap {
  Tensor grid;  // 1 x 1 x h x w, non-negative, carries no gradient
};

// sigmoid(x) where x > 0, the floor elsewhere. Continuous at 0 when the
// floor is 0.5; gradient exists only on the positive branch.
inline WeightMap weight_activation(const Tensor& x, double t_floor) {
  return WeightMap{floored_sigmoid(x, t_floor)};
}

// Per-pixel squared error, detached by construction: it steers only the
// tutoring loss, never the main network.
inline ErrorMap error_map(const Tensor& pred, const DensityMap& gt) {
  detail::check_same_shape(pred, gt.grid, "error_map");
  std::vector<double> e(pred.values());
  const auto& g = gt.grid.values();
  for (std::size_t i = 0; i < e.size(); ++i) {
    double d = e[i] - g[i];
    e[i] = d * d;
  }
  return ErrorMap{Tensor::from(pred.shape(), std::move(e))};
}

// Sum over pixels of (1 - w) * e + w * max(M - e, 0). Differentiable in w;
// e enters as a constant.
inline Tensor tutor_loss(const WeightMap& w, const ErrorMap& e, double margin) {
  detail::check_same_shape(w.grid, e.grid, "tutor_loss");
  if (e.grid.needs_grad())
    throw TensorError("tutor_loss: the error map must not carry gradient");
  Tensor ones = Tensor::filled(w.grid.shape(), 1.0);
  Tensor hinge = max_scalar(add_scalar(scale(e.grid, -1.0), margin), 0.0);
  return sum(add(mul(sub(ones, w.grid), e.grid), mul(w.grid, hinge)));
}

// Closed-form d(tutor_loss)/dw: M - 2e where e < M, -e where e >= M.
// Positive below M/2 (descent eases off), negative above (descent raises w).
inline Tensor tutor_loss_grad(const WeightMap& w, const ErrorMap& e, double margin) {
  detail::check_same_shape(w.grid, e.grid, "tutor_loss_grad");
  std::vector<double> g(e.grid.values());
  for (double& v : g) v = v < margin ? margin - 2.0 * v : -v;
  return Tensor::from(e.grid.shape(), std::move(g));
}

// Mean over pixels of (pred - gt)^2 * w. The weight map is frozen here so
// the main network cannot lower its loss by steering its own curriculum.
inline Tensor main_loss(const Tensor& pred, const DensityMap& gt, const WeightMap& w) {
  detail::check_same_shape(pred, gt.grid, "main_loss");
  detail::check_same_shape(pred, w.grid, "main_loss");
  Tensor frozen = w.grid.needs_grad() ? w.grid.detach() : w.grid;
  return mean(mul(square(sub(pred, gt.grid)), frozen));
}

// Scalar reference for the update dynamics: one descent step on w, clamped
// to the activation's reachable range [t_floor, 1).
inline double descent_step_w(double w, double e, double margin, double alpha,
                             double t_floor = 0.5) {
  double grad = e < margin ? margin - 2.0 * e : -e;
  double next = w - alpha * grad;
  double hi = std::nextafter(1.0, 0.0);
  return std::clamp(next, t_floor, hi);
}

}  // namespace tutornet
