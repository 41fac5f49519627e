#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rawscore/image.hpp"

namespace rawscore {

// Parallel-beam projections of one slice, angle-major.
struct Sinogram {
  std::size_t n_angles = 0;
  std::size_t n_det = 0;
  std::vector<double> angles_deg;
  double spacing = 1.0;  // detector bin width in image pixels
  std::vector<double> data;

  double& at(std::size_t angle, std::size_t bin) { return data[angle * n_det + bin]; }
  double at(std::size_t angle, std::size_t bin) const { return data[angle * n_det + bin]; }
};

// n angles evenly covering [0, span) degrees.
std::vector<double> uniform_angles(std::size_t n, double span_deg = 180.0);

// Smallest detector count covering the image diagonal, same parity as n so
// the rotation axis falls on a bin centre when n is odd.
std::size_t detector_count(std::size_t n);

// Line integrals of the pixel-constant image, averaged over each detector
// bin: every pixel's square shadow is integrated over the bins it covers, so
// every angle preserves the image mass exactly.
Sinogram forward_radon(const RealImage& image, std::span<const double> angles_deg);

enum class RampFilter { kRamp, kHann };

std::string to_string(RampFilter f);
RampFilter ramp_filter_from_string(const std::string& name);

// Filtered back projection; pixels outside the inscribed circle are 0. The
// per-angle weight pi/n also averages opposite views on a full turn.
RealImage fbp_reconstruct(const Sinogram& sino, RampFilter filter, std::size_t out_size);

// Projections of a volume (one slice per z): page a holds angle a as an
// (n_det x depth) image.
enum class ProjectionLayout { kPerAngle, kPerSlice };

RealImage project_volume(const RealImage& volume, std::span<const double> angles_deg);
// Per-angle layout: dims (n_det, n_slices, n_angles). Per-slice layout: dims
// (n_det, n_angles, n_slices), i.e. one sinogram per page.
RealImage reconstruct_volume(const RealImage& projections, ProjectionLayout layout,
                             std::span<const double> angles_deg, RampFilter filter,
                             std::size_t out_size);

// Percentile-clipped min-max scaling to the 16-bit range.
ImageStack normalize_volume(const RealImage& volume, double low_percentile = 0.1,
                            double high_percentile = 99.9);

// Sinogram as a 16-bit TIFF (one page) plus "<path>.json" holding the
// geometry and the linear scale that maps stored values back.
void save_sinogram(const Sinogram& sino, const std::filesystem::path& tiff_path);
Sinogram load_sinogram(const std::filesystem::path& tiff_path);

}  // namespace rawscore
