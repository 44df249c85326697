#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tutornet/density.hpp"
#include "tutornet/rng.hpp"

using namespace tutornet;
using Catch::Approx;

namespace {

AnnotatedScene blank_scene(int w, int h, std::vector<Point> points,
                           const std::string& id = "t") {
  return AnnotatedScene{Tensor::filled({1, 1, h, w}, 1.0), std::move(points), id};
}

double grid_sum(const DensityMap& m) {
  double acc = 0.0;
  for (double v : m.grid.values()) acc += v;
  return acc;
}

}  // namespace

TEST_CASE("single centered point integrates to one") {
  auto scene = blank_scene(128, 128, {{64.0, 64.0}});
  DensityMap m = make_density_map(scene, 15.0, 1, 1.0);
  CHECK(grid_sum(m) == Approx(1.0).margin(1e-9));

  DensityMap scaled = make_density_map(scene, 15.0, 1, 1000.0);
  CHECK(grid_sum(scaled) == Approx(1000.0).margin(1e-6));
}

TEST_CASE("seven random interior points count preserved at downsample 8") {
  Rng rng(99);
  std::vector<Point> pts;
  for (int i = 0; i < 7; ++i)
    pts.push_back({rng.uniform(61.0, 195.0), rng.uniform(61.0, 195.0)});
  auto scene = blank_scene(256, 256, pts);
  DensityMap m = make_density_map(scene, 15.0, 8, 1000.0);
  CHECK(grid_sum(m) / 1000.0 == Approx(7.0).margin(1e-6));
}

TEST_CASE("border points keep unit mass through renormalization") {
  auto scene = blank_scene(64, 64, {{0.4, 0.2}, {63.5, 63.9}});
  DensityMap m = make_density_map(scene, 15.0, 1, 1.0);
  CHECK(grid_sum(m) == Approx(2.0).margin(1e-9));
}

TEST_CASE("scaling is an exact elementwise multiply") {
  Rng rng(5);
  std::vector<Point> pts;
  for (int i = 0; i < 10; ++i)
    pts.push_back({rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)});
  auto scene = blank_scene(64, 64, pts);
  DensityMap unit = make_density_map(scene, 15.0, 8, 1.0);
  DensityMap scaled = make_density_map(scene, 15.0, 8, 1000.0);
  REQUIRE(unit.grid.numel() == scaled.grid.numel());
  for (std::size_t i = 0; i < unit.grid.values().size(); ++i)
    CHECK(scaled.grid.values()[i] == unit.grid.values()[i] * 1000.0);  // bit-exact
}

TEST_CASE("downsample levels agree on total count") {
  Rng rng(31);
  std::vector<Point> pts;
  for (int i = 0; i < 9; ++i)
    pts.push_back({rng.uniform(5.0, 59.0), rng.uniform(5.0, 59.0)});
  auto scene = blank_scene(64, 64, pts);
  for (int d : {1, 2, 4, 8}) {
    DensityMap m = make_density_map(scene, 15.0, d, 1.0);
    CHECK(grid_sum(m) == Approx(9.0).margin(1e-6 * 9));
  }
}

TEST_CASE("density rejects invalid arguments") {
  auto scene = blank_scene(64, 64, {{10.0, 10.0}});
  CHECK_THROWS_AS(make_density_map(scene, 0.0, 1, 1.0), SceneError);
  CHECK_THROWS_AS(make_density_map(scene, 15.0, 3, 1.0), SceneError);
  CHECK_THROWS_AS(make_density_map(scene, 15.0, 1, 0.0), SceneError);

  auto bad = blank_scene(64, 64, {{64.0, 10.0}});  // x == W is outside
  CHECK_THROWS_AS(validate_scene(bad), SceneError);
}

TEST_CASE("value_histogram covers range and counts every pixel") {
  auto scene = blank_scene(64, 64, {{32.0, 32.0}});
  DensityMap m = make_density_map(scene, 4.0, 1, 1.0);
  auto hist = value_histogram(m, 10);
  REQUIRE(hist.size() == 10);
  long long total = 0;
  for (auto& [edge, count] : hist) total += count;
  CHECK(total == m.grid.numel());
  CHECK(hist.front().first == Approx(0.0));

  SECTION("scaled histogram support stretches by the factor") {
    DensityMap big = scaled_copy(m, 1000.0);
    auto hist2 = value_histogram(big, 10);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      CHECK(hist2[i].first == Approx(hist[i].first * 1000.0));
      CHECK(hist2[i].second == hist[i].second);
    }
  }
}

TEST_CASE("value_histogram degenerate all-zero map") {
  DensityMap zero{Tensor::zeros({1, 1, 4, 4}), 1.0, 15.0, 1};
  auto hist = value_histogram(zero, 8);
  REQUIRE(hist.size() == 1);
  CHECK(hist[0].first == 0.0);
  CHECK(hist[0].second == 16);
}

TEST_CASE("value_histogram rejects fewer than two bins") {
  DensityMap zero{Tensor::zeros({1, 1, 2, 2}), 1.0, 15.0, 1};
  CHECK_THROWS_AS(value_histogram(zero, 1), SceneError);
}

TEST_CASE("cluster distances: two-value map") {
  DensityMap m{Tensor::from({1, 1, 2, 2}, {0.0, 0.001, 0.001, 0.0}), 1.0, 15.0, 1};
  auto rows = cluster_distance_analysis(m);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].first == Approx(0.0));
  CHECK(rows[0].second == Approx(0.0005));
  CHECK(rows[1].first == Approx(0.001));
  CHECK(rows[1].second == Approx(0.0005));
}

TEST_CASE("cluster distances: constant map collapses to one group") {
  DensityMap m{Tensor::filled({1, 1, 3, 3}, 0.25), 1.0, 15.0, 1};
  auto rows = cluster_distance_analysis(m);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].second == Approx(0.0));
}

TEST_CASE("cluster distances group by the 4-decimal rounding") {
  // 0.00012 and 0.00008 both round to 0.0001; 0.12341 rounds to 0.1234.
  DensityMap m{Tensor::from({1, 1, 2, 2}, {0.00012, 0.00008, 0.12341, 0.12339}), 1.0,
               15.0, 1};
  auto rows = cluster_distance_analysis(m);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].first == Approx(0.0001));
  CHECK(rows[1].first == Approx(0.1234));
}

TEST_CASE("cluster distances scale linearly on 4-decimal data") {
  Rng rng(77);
  std::vector<double> vals(64);
  for (double& v : vals) v = round4(rng.uniform(0.0, 0.02));
  DensityMap base{Tensor::from({1, 1, 8, 8}, vals), 1.0, 15.0, 1};
  auto ref = cluster_distance_analysis(base);
  for (double s : {10.0, 100.0, 1000.0}) {
    auto scaled = cluster_distance_analysis(scaled_copy(base, s));
    REQUIRE(scaled.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(scaled[i].first == Approx(ref[i].first * s).epsilon(1e-9));
      if (ref[i].second > 0)
        CHECK(scaled[i].second == Approx(ref[i].second * s).epsilon(1e-9));
    }
  }
}

TEST_CASE("quantize4 snaps to the rounding lattice") {
  DensityMap m{Tensor::from({1, 1, 1, 3}, {0.00012, 0.5, 0.99996}), 1.0, 15.0, 1};
  DensityMap q = quantize4(m);
  CHECK(q.grid.values()[0] == Approx(0.0001));
  CHECK(q.grid.values()[1] == Approx(0.5));
  CHECK(q.grid.values()[2] == Approx(1.0));
}
