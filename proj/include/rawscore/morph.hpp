#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rawscore/image.hpp"

namespace rawscore {

struct LabeledObjects {
  LabelMap labels;  // 0 = background, objects 1..count
  std::size_t count = 0;
};

// Two-pass union-find labelling. Connectivity 4 or 8 in 2D, 6 or 26 in 3D;
// labels are numbered in raster order of each object's first pixel.
LabeledObjects label_components(const Mask& mask, int connectivity);
LabeledObjects label_components(const Mask& mask);  // 8 (2D) or 26 (3D)

// Flat pixel indices of each object, ascending; entry k is label k + 1.
std::vector<std::vector<std::size_t>> object_pixels(const LabeledObjects& objects);

// Pixel centres sit at integer coordinates (0-indexed); angles are degrees
// in [0, 180) counter-clockwise from +x with y pointing up.
struct ObjectRecord2D {
  std::uint32_t label = 0;
  double area = 0;
  double x_cm = 0;
  double y_cm = 0;
  double perimeter = 0;
  double major = 0;
  double minor = 0;
  double angle = 0;
  double circularity = 0;
  double feret = 0;
  double feret_x = 0;
  double feret_y = 0;
  double feret_angle = 0;
  double min_feret = 0;
  double aspect_ratio = 0;
  double roundness = 0;
  double solidity = 0;
  double feret_ar = 0;
  double compactness = 0;
  double extent = 0;
  // Set when the fitted ellipse collapses (minor axis 0); ratios that divide
  // by the minor axis are then reported as 0.
  bool degenerate = false;
};

inline constexpr std::array<std::string_view, 19> kObjectParams2D = {
    "area",        "x_cm",     "y_cm",        "perimeter", "major",        "minor",     "angle",
    "circularity", "feret",    "feret_x",     "feret_y",   "feret_angle",  "min_feret", "aspect_ratio",
    "roundness",   "solidity", "feret_ar",    "compactness", "extent"};

double param_value(const ObjectRecord2D& record, std::size_t param);
// Angle-valued parameters live on a 180-degree circle.
bool is_angle_param(std::string_view name);

// Pixel coordinates (x, y) of one object.
ObjectRecord2D object_params_2d(const std::vector<std::array<std::int64_t, 2>>& pixels);
std::vector<ObjectRecord2D> object_params_2d(const LabeledObjects& objects);

struct ObjectRecord3D {
  std::uint32_t label = 0;
  double volume = 0;  // voxels
  double volume_um3 = 0;
  double x_cm = 0;
  double y_cm = 0;
  double z_cm = 0;
  double surface_faces = 0;
  double surface_um2 = 0;
};

inline constexpr std::array<std::string_view, 7> kObjectParams3D = {
    "volume", "volume_um3", "x_cm", "y_cm", "z_cm", "surface_faces", "surface_um2"};

double param_value(const ObjectRecord3D& record, std::size_t param);

std::vector<ObjectRecord3D> object_params_3d(const LabeledObjects& objects, const VoxelSize& voxel);

struct PlaqueParams {
  double total_volume = 0;  // voxels
  double load = 0;          // total_volume / organ volume
  double count = 0;
  double mean_volume = 0;
  double organ_volume = 0;
};

struct GlobalParams {
  double n_tot = 0;
  double a_tot = 0;   // pixels (2D) or voxels (3D)
  double sa_tot = 0;  // exposed faces (3D only)
  std::optional<PlaqueParams> plaque;
};

GlobalParams global_params(const LabeledObjects& objects);
// Plaque context: organ volume is the organ-mask voxel count.
GlobalParams global_params(const LabeledObjects& plaques, const Mask& organ);

void to_json(nlohmann::json& j, const ObjectRecord2D& r);
void to_json(nlohmann::json& j, const ObjectRecord3D& r);
void to_json(nlohmann::json& j, const GlobalParams& g);

void write_objects_csv(const std::vector<ObjectRecord2D>& records, const std::filesystem::path& path);
void write_objects_csv(const std::vector<ObjectRecord3D>& records, const std::filesystem::path& path);

}  // namespace rawscore
