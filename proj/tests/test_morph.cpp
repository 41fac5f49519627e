#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rawscore/morph.hpp"

using namespace rawscore;

namespace {

Mask mask_from(const std::vector<std::string>& rows) {
  Mask m(Dims{rows[0].size(), rows.size(), 1});
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x) m.at(x, y) = rows[y][x] == '#';
  return m;
}

std::vector<std::array<std::int64_t, 2>> box(std::int64_t w, std::int64_t h) {
  std::vector<std::array<std::int64_t, 2>> px;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) px.push_back({x, y});
  return px;
}

}  // namespace

TEST(Labeling, DiagonalNeighboursDependOnConnectivity) {
  const auto m = mask_from({"#..", ".#.", "..#"});
  EXPECT_EQ(label_components(m, 4).count, 3u);
  EXPECT_EQ(label_components(m, 8).count, 1u);
  EXPECT_EQ(label_components(m).count, 1u);
  EXPECT_THROW(label_components(m, 6), Error);
}

TEST(Labeling, RasterOrderOfFirstPixel) {
  // The U shape is found first although its arms merge late.
  const auto m = mask_from({"#.#..#", "#.#...", "###.##"});
  const auto obj = label_components(m, 4);
  ASSERT_EQ(obj.count, 3u);
  EXPECT_EQ(obj.labels.at(0, 0), 1u);
  EXPECT_EQ(obj.labels.at(2, 0), 1u);
  EXPECT_EQ(obj.labels.at(5, 0), 2u);
  EXPECT_EQ(obj.labels.at(4, 2), 3u);
  const auto px = object_pixels(obj);
  EXPECT_EQ(px[0].size(), 7u);
  EXPECT_TRUE(std::is_sorted(px[0].begin(), px[0].end()));
}

TEST(Labeling, ThreeD) {
  Mask m(Dims{3, 3, 3});
  m.at(0, 0, 0) = 1;
  m.at(1, 1, 1) = 1;
  m.at(2, 2, 2) = 1;
  m.at(2, 2, 1) = 1;
  EXPECT_EQ(label_components(m, 6).count, 3u);
  EXPECT_EQ(label_components(m, 26).count, 1u);
}

TEST(Shape2D, Rectangle) {
  const auto r = object_params_2d(box(40, 10));
  EXPECT_EQ(r.area, 400);
  EXPECT_DOUBLE_EQ(r.x_cm, 19.5);
  EXPECT_DOUBLE_EQ(r.y_cm, 4.5);
  EXPECT_NEAR(r.perimeter, 100.0 - 4 * (2 - std::sqrt(2.0)), 1e-12);
  const double ratio = std::sqrt((1600.0 - 1) / (100.0 - 1));
  EXPECT_NEAR(r.major, 2 * std::sqrt(400 / std::numbers::pi * ratio), 1e-9);
  EXPECT_NEAR(r.minor, 2 * std::sqrt(400 / std::numbers::pi / ratio), 1e-9);
  EXPECT_NEAR(r.major * r.minor * std::numbers::pi / 4, 400.0, 1e-9);
  EXPECT_NEAR(r.angle, 0.0, 1e-9);
  EXPECT_NEAR(r.feret, std::sqrt(1700.0), 1e-12);
  EXPECT_NEAR(r.min_feret, 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.solidity, 1.0);
  EXPECT_DOUBLE_EQ(r.extent, 1.0);
  EXPECT_FALSE(r.degenerate);
}

TEST(Shape2D, SinglePixelAndLine) {
  const auto p = object_params_2d(box(1, 1));
  EXPECT_NEAR(p.perimeter, 4 - 2 * (2 - std::sqrt(2.0)), 1e-12);
  EXPECT_TRUE(p.degenerate);
  const auto line = object_params_2d(box(1, 9));
  EXPECT_TRUE(line.degenerate);
  EXPECT_EQ(line.minor, 0);
  EXPECT_EQ(line.aspect_ratio, 0);
  EXPECT_NEAR(line.angle, 90.0, 1e-9);
}

TEST(Shape2D, DiagonalAngleIsCounterClockwiseWithYUp) {
  // Pixels along y = -x in image rows point up-right.
  std::vector<std::array<std::int64_t, 2>> px;
  for (std::int64_t i = 0; i < 10; ++i) {
    px.push_back({i, 10 - i});
    px.push_back({i + 1, 10 - i});
  }
  const auto r = object_params_2d(px);
  EXPECT_NEAR(r.angle, 45.0, 1.0);
}

TEST(Shape2D, ParamTableMatchesRecord) {
  const auto r = object_params_2d(box(5, 3));
  EXPECT_EQ(param_value(r, 0), r.area);
  EXPECT_EQ(param_value(r, 18), r.extent);
  EXPECT_TRUE(is_angle_param("angle"));
  EXPECT_TRUE(is_angle_param("feret_angle"));
  EXPECT_FALSE(is_angle_param("feret"));
}

TEST(Shape3D, FacesAndPhysicalUnits) {
  Mask m(Dims{5, 5, 5});
  for (std::size_t z = 1; z < 4; ++z)
    for (std::size_t y = 1; y < 3; ++y)
      for (std::size_t x = 1; x < 2; ++x) m.at(x, y, z) = 1;  // 1 x 2 x 3 block
  const auto r = object_params_3d(label_components(m), {0.5, 2.0, 3.0});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].volume, 6);
  EXPECT_DOUBLE_EQ(r[0].volume_um3, 6 * 3.0);
  EXPECT_EQ(r[0].surface_faces, 2 * (2 + 3 + 6));
  // x-faces: 2*6, y-faces: 2*3, z-faces: 2*2.
  EXPECT_DOUBLE_EQ(r[0].surface_um2, 12 * 2.0 * 3.0 + 6 * 0.5 * 3.0 + 4 * 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(r[0].z_cm, 2.0);
}

TEST(Global, TotalsAndPlaque) {
  const auto m = mask_from({"##..#", "##...", "....#"});
  const auto obj = label_components(m, 4);
  const auto g = global_params(obj);
  EXPECT_EQ(g.n_tot, 3);
  EXPECT_EQ(g.a_tot, 6);
  Mask organ(m.dims(), 1);
  const auto gp = global_params(obj, organ);
  ASSERT_TRUE(gp.plaque.has_value());
  EXPECT_EQ(gp.plaque->total_volume, 6);
  EXPECT_EQ(gp.plaque->organ_volume, 15);
  EXPECT_DOUBLE_EQ(gp.plaque->load, 6.0 / 15.0);
  EXPECT_EQ(gp.plaque->count, 3);
  EXPECT_DOUBLE_EQ(gp.plaque->mean_volume, 2.0);
  try {
    global_params(obj, Mask(m.dims(), 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyOrgan);
  }
}
