#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rawscore/image.hpp"

namespace rawscore {

// Uncompressed, striped, grayscale TIFF. Files are written little-endian with
// one strip per page; readers accept either byte order and any strip count.
ImageStack read_stack(const std::filesystem::path& path);
void write_stack(const ImageStack& stack, const std::filesystem::path& path);

// In-memory variants used by the file functions and by tests.
ImageStack decode_tiff(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_tiff(const ImageStack& stack);

// 32-bit label maps travel as separate files, never inside pixel data.
void write_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap read_labels(const std::filesystem::path& path);

enum class PhantomKind { kDisks2d, kBlobs2d, kSpheres3d, kSheppLogan2d, kFlatfield };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::kDisks2d;
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t depth = 1;
  int bit_depth = 16;
  VoxelSize voxel_size;
  // Intensities in ADU.
  double background = 500.0;
  double foreground = 3000.0;
  // Flatfield level.
  double level = 500.0;
  // Object geometry in pixels.
  std::size_t count = 3;
  double radius = 10.0;
  double radius_jitter = 0.0;
  // Blob ellipse axis ratio range (minor/major), blobs2d only.
  double min_axis_ratio = 0.5;
  // Width of the linear intensity ramp across object boundaries; 0 leaves
  // only the subpixel area-coverage grading.
  double edge_width = 0.0;
  // Relative spread of per-object foreground intensity.
  double intensity_jitter = 0.0;
  bool non_overlapping = true;
  double min_separation = 2.0;
  double margin = 2.0;
  std::uint64_t seed = 1;
};

struct Phantom {
  ImageStack image;
  LabelMap truth;
};

// Noiseless scene plus aligned ground-truth labels; a pure function of spec.
Phantom generate_phantom(const PhantomSpec& spec);

// Modified Shepp-Logan (Toft) ellipse table: {amplitude, a, b, x0, y0, phi_deg}.
struct Ellipse {
  double amplitude, a, b, x0, y0, phi_deg;
};
std::span<const Ellipse> shepp_logan_ellipses();

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);
PhantomKind phantom_kind_from_string(const std::string& name);
std::string to_string(PhantomKind kind);

}  // namespace rawscore
