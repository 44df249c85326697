#pragma once

// Deterministic synthetic crowd scenes. Defaults are tuned so the unscaled
// ground-truth maps show the target value imbalance: > 95% of pixels below
// 1e-3, peaks a few 1e-3, and well under 1% of pixels above half the peak.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "tutornet/density.hpp"
#include "tutornet/rng.hpp"
#include "tutornet/tensor.hpp"

namespace tutornet {

struct SceneRecipe {
  int width = 256;
  int height = 256;
  int n_points_min = 6;
  int n_points_max = 14;
  int cluster_count_min = 5;
  int cluster_count_max = 9;
  double cluster_spread = 22.0;  // pixels
  double blob_radius_min = 2.0;
  double blob_radius_max = 5.0;
  enum class Background { flat, noise } background = Background::noise;
  double noise_sigma = 0.03;
  std::uint64_t seed = 1234;

  void validate() const {
    if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0)
      throw SceneError("recipe dims must be positive and divisible by 8");
    if (n_points_min < 0 || n_points_min > n_points_max)
      throw SceneError("recipe: need 0 <= n_points_min <= n_points_max");
    if (cluster_count_min < 1 || cluster_count_min > cluster_count_max)
      throw SceneError("recipe: need 1 <= cluster_count_min <= cluster_count_max");
    if (!(cluster_spread >= 0.0)) throw SceneError("recipe: cluster_spread < 0");
    if (!(blob_radius_min > 0.0) || blob_radius_min > blob_radius_max)
      throw SceneError("recipe: need 0 < blob_radius_min <= blob_radius_max");
    if (!(noise_sigma >= 0.0)) throw SceneError("recipe: noise_sigma < 0");
  }
};

inline std::string scene_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene%05llu", static_cast<unsigned long long>(index));
  return buf;
}

// Pure function of (recipe.seed, index). Cluster centers are uniform over
// the canvas; point i scatters around center i mod k and is resampled until
// it lands strictly inside. Pixels are quantized to 8-bit levels at
// generation time so the PPM round trip is lossless.
inline AnnotatedScene generate_scene(const SceneRecipe& recipe, std::uint64_t index) {
  recipe.validate();
  Rng rng(derive_seed(recipe.seed, index));
  const int W = recipe.width, H = recipe.height;

  int n = rng.uniform_int(recipe.n_points_min, recipe.n_points_max);
  int k = rng.uniform_int(recipe.cluster_count_min, recipe.cluster_count_max);
  k = n > 0 ? std::max(1, std::min(k, n)) : 0;

  std::vector<Point> centers(k);
  for (Point& c : centers) {
    c.x = rng.uniform(0.0, W);
    c.y = rng.uniform(0.0, H);
  }
  std::vector<Point> points(n);
  std::vector<double> radii(n);
  for (int i = 0; i < n; ++i) {
    const Point& c = centers[i % k];
    for (;;) {
      double x = c.x + rng.normal() * recipe.cluster_spread;
      double y = c.y + rng.normal() * recipe.cluster_spread;
      if (x >= 0.0 && x < W && y >= 0.0 && y < H) {
        points[i] = {x, y};
        break;
      }
    }
    radii[i] = rng.uniform(recipe.blob_radius_min, recipe.blob_radius_max);
  }

  std::vector<double> gray(static_cast<std::size_t>(H) * W, 0.92);
  if (recipe.background == SceneRecipe::Background::noise)
    for (double& v : gray)
      v = std::clamp(v + rng.normal() * recipe.noise_sigma, 0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    double r = radii[i];
    double inv = 1.0 / (2.0 * (r / 2.0) * (r / 2.0));
    int x0 = std::max(0, static_cast<int>(std::floor(points[i].x - 3.0 * r)));
    int x1 = std::min(W - 1, static_cast<int>(std::ceil(points[i].x + 3.0 * r)));
    int y0 = std::max(0, static_cast<int>(std::floor(points[i].y - 3.0 * r)));
    int y1 = std::min(H - 1, static_cast<int>(std::ceil(points[i].y + 3.0 * r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x - points[i].x, dy = y - points[i].y;
        double& v = gray[static_cast<std::size_t>(y) * W + x];
        v = std::max(0.0, v - 0.65 * std::exp(-(dx * dx + dy * dy) * inv));
      }
  }
  for (double& v : gray) v = std::round(v * 255.0) / 255.0;

  // Grayscale replicated to 3 channels so RGB-style stems run unchanged.
  std::vector<double> img(3 * gray.size());
  for (int c = 0; c < 3; ++c)
    std::copy(gray.begin(), gray.end(), img.begin() + static_cast<std::size_t>(c) * gray.size());
  return AnnotatedScene{Tensor::from({1, 3, H, W}, std::move(img)), std::move(points),
                        scene_id(index)};
}

inline std::vector<AnnotatedScene> generate_dataset(const SceneRecipe& recipe,
                                                    std::uint64_t count) {
  std::vector<AnnotatedScene> scenes;
  scenes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) scenes.push_back(generate_scene(recipe, i));
  return scenes;
}

}  // namespace tutornet
