#pragma once

// Point annotations to ground-truth density maps, the scale-factor
// transform, and the value-distribution analyses.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tutornet/tensor.hpp"

namespace tutornet {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct AnnotatedScene {
  Tensor image;  // 1 x C x H x W, values in [0, 1]
  std::vector<Point> points;
  std::string id;

  int width() const { return image.shape()[3]; }
  int height() const { return image.shape()[2]; }
};

struct SceneError : std::runtime_error {
  explicit SceneError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void validate_scene(const AnnotatedScene& scene) {
  const Shape& s = scene.image.shape();
  if (s.size() != 4 || s[0] != 1)
    throw SceneError("scene image must be 1xCxHxW, got " + shape_str(s));
  double w = s[3], h = s[2];
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Point& p = scene.points[i];
    if (!(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h))
      throw SceneError("scene " + scene.id + ": point " + std::to_string(i) +
                       " (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                       ") outside [0," + std::to_string(s[3]) + ")x[0," +
                       std::to_string(s[2]) + ")");
  }
}

struct DensityMap {
  Tensor grid;  // 1 x 1 x h x w, non-negative
  double scale_factor = 1.0;
  double sigma = 15.0;
  int downsample = 1;

  int width() const { return grid.shape()[3]; }
  int height() const { return grid.shape()[2]; }
};

// One truncated Gaussian per point, each renormalized to unit mass over its
// in-grid support (counts survive both truncation and image borders), then
// a single multiply by scale_factor. The late multiply makes the transform
// exact: grid(s) == s * grid(1) elementwise.
inline DensityMap make_density_map(const AnnotatedScene& scene, double sigma,
                                   int downsample, double scale_factor) {
  if (!(sigma > 0.0)) throw SceneError("sigma must be positive");
  if (!(scale_factor > 0.0)) throw SceneError("scale factor must be positive");
  if (downsample != 1 && downsample != 2 && downsample != 4 && downsample != 8)
    throw SceneError("downsample must be one of 1, 2, 4, 8");
  validate_scene(scene);
  int H = scene.height(), W = scene.width();
  if (H % downsample != 0 || W % downsample != 0)
    throw SceneError("image dims must be divisible by the downsample rate");
  int h = H / downsample, w = W / downsample;

  std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
  double sg = sigma / downsample;
  double radius = 4.0 * sg;
  double inv2s2 = 1.0 / (2.0 * sg * sg);
  std::vector<double> kernel;
  for (const Point& p : scene.points) {
    double cx = p.x / downsample, cy = p.y / downsample;
    int x0 = std::max(0, static_cast<int>(std::ceil(cx - radius)));
    int x1 = std::min(w - 1, static_cast<int>(std::floor(cx + radius)));
    int y0 = std::max(0, static_cast<int>(std::ceil(cy - radius)));
    int y1 = std::min(h - 1, static_cast<int>(std::floor(cy + radius)));
    double mass = 0.0;
    kernel.assign(static_cast<std::size_t>(y1 - y0 + 1) * (x1 - x0 + 1), 0.0);
    std::size_t ki = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x, ++ki) {
        double dx = x - cx, dy = y - cy;
        double g = std::exp(-(dx * dx + dy * dy) * inv2s2);
        kernel[ki] = g;
        mass += g;
      }
    if (mass <= 0.0) {
      // Degenerate sigma/window: drop the whole mass on the nearest cell.
      int x = std::min(w - 1, std::max(0, static_cast<int>(std::lround(cx))));
      int y = std::min(h - 1, std::max(0, static_cast<int>(std::lround(cy))));
      grid[static_cast<std::size_t>(y) * w + x] += 1.0;
      continue;
    }
    ki = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x, ++ki)
        grid[static_cast<std::size_t>(y) * w + x] += kernel[ki] / mass;
  }
  if (scale_factor != 1.0)
    for (double& v : grid) v *= scale_factor;
  return DensityMap{Tensor::from({1, 1, h, w}, std::move(grid)), scale_factor,
                    sigma, downsample};
}

// Equal-width bins over [0, max]; returns (lower edge, count) per bin.
// An all-zero map degenerates to the single bin [0, 0] holding every pixel.
inline std::vector<std::pair<double, long long>> value_histogram(const DensityMap& map,
                                                                 int bins) {
  if (bins < 2) throw SceneError("value_histogram needs at least 2 bins");
  const auto& v = map.grid.values();
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  if (mx == 0.0) return {{0.0, static_cast<long long>(v.size())}};
  double width = mx / bins;
  std::vector<std::pair<double, long long>> out(bins);
  for (int i = 0; i < bins; ++i) out[i] = {width * i, 0};
  for (double x : v) {
    int b = std::min(bins - 1, static_cast<int>(x / width));
    ++out[b].second;
  }
  return out;
}

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

// Quantized copy of a map's values; the clustering step applied up front so
// that subsequent scale factors act on the 4-decimal lattice.
inline DensityMap quantize4(const DensityMap& map) {
  std::vector<double> v = map.grid.values();
  for (double& x : v) x = round4(x);
  return DensityMap{Tensor::from(map.grid.shape(), std::move(v)), map.scale_factor,
                    map.sigma, map.downsample};
}

inline DensityMap scaled_copy(const DensityMap& map, double factor) {
  std::vector<double> v = map.grid.values();
  for (double& x : v) x *= factor;
  return DensityMap{Tensor::from(map.grid.shape(), std::move(v)),
                    map.scale_factor * factor, map.sigma, map.downsample};
}

// Round every pixel to 4 decimals, take the distinct rounded values as
// groups, average the group values without multiplicity, and report each
// group's absolute distance to that mean, sorted by group value.
inline std::vector<std::pair<double, double>> cluster_distance_analysis(
    const DensityMap& map) {
  std::map<double, bool> groups;
  for (double v : map.grid.values()) groups[round4(v)] = true;
  double mean = 0.0;
  for (const auto& [g, _] : groups) mean += g;
  mean /= static_cast<double>(groups.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(groups.size());
  for (const auto& [g, _] : groups) out.emplace_back(g, std::abs(g - mean));
  return out;
}

}  // namespace tutornet
