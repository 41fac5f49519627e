#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rawscore/image.hpp"

namespace rawscore {

// Photon-transfer noise model of one sensor, in ADU.
struct NoiseModel {
  enum class Mode { kParametric, kEmpirical };

  Mode mode = Mode::kParametric;
  double gain = 1.0;           // K, ADU per photo-electron
  double offset = 0.0;         // d0, dark level
  double read_variance = 0.0;  // sigma_read^2
  double saturation = 65535.0;
  int bit_depth = 16;
  // (d, sigma) knots, strictly increasing in d.
  std::vector<std::pair<double, double>> empirical_curve;
  // Optional per-pixel dark level; empty unless requested at fit time.
  std::vector<double> offset_map;

  static NoiseModel parametric(double gain, double offset, double read_variance,
                               double saturation = 65535.0, int bit_depth = 16);
};

// Standard deviation of a pixel reading d. Parametric mode follows the
// photon-transfer law; empirical mode interpolates the knots linearly and
// clamps outside them.
double sigma_of(const NoiseModel& model, double d);

// Throws InvalidSpec when the model breaks its invariants.
void validate(const NoiseModel& model);

void to_json(nlohmann::json& j, const NoiseModel& model);
void from_json(const nlohmann::json& j, NoiseModel& model);
NoiseModel load_noise_model(const std::filesystem::path& path);
void save_noise_model(const NoiseModel& model, const std::filesystem::path& path);
// Stable 16-hex-digit digest of the model's canonical JSON.
std::string model_hash(const NoiseModel& model);

struct CalibrationLevel {
  double photons = 0;  // mean photo-electron surrogate <n>
  std::vector<ImageStack> frames;
};

struct CalibrationSeries {
  std::vector<CalibrationLevel> levels;
};

// Square-law illumination ladder from dark to saturation; each frame is drawn
// per pixel from Normal(mean, sigma_true), rounded, and clipped at the
// sensor's saturation.
CalibrationSeries simulate_calibration_bench(const NoiseModel& model_true, Dims dims,
                                             std::size_t n_levels, std::size_t n_frames,
                                             std::uint64_t seed);

// Per-level statistics consumed by the fit: mean signal, temporal variance
// and its degrees of freedom.
struct LevelStats {
  double photons = 0;
  double mean = 0;
  double variance = 0;
  double dof = 1;
};

LevelStats level_stats(const CalibrationLevel& level);

struct FitOptions {
  bool per_pixel_offset = false;
  // A level whose variance falls below this fraction of the linear
  // prediction marks the saturation turnover.
  double turnover_fraction = 0.8;
  std::size_t min_levels = 8;
};

// Weighted least squares of v = sigma_read^2 + K (d - d0) over the linear
// region; d0 is the mean of the darkest level.
NoiseModel fit_photon_transfer(std::span<const LevelStats> stats, int bit_depth,
                               const FitOptions& options = {});
NoiseModel fit_noise_model(const CalibrationSeries& series, const FitOptions& options = {});

// Directory layout: levels.json {"levels":[{"photons":n,"file":"level_000.tif"}]}
// with each TIFF holding one frame per page.
void write_series(const CalibrationSeries& series, const std::filesystem::path& dir);
CalibrationSeries read_series(const std::filesystem::path& dir);

}  // namespace rawscore
