#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rawscore/calib.hpp"
#include "rawscore/codec.hpp"
#include "rawscore/imgio.hpp"
#include "rawscore/mlseg.hpp"
#include "rawscore/morph.hpp"
#include "rawscore/score.hpp"
#include "rawscore/synth.hpp"
#include "rawscore/tomo.hpp"

namespace rawscore {

// ---- segmentation -----------------------------------------------------------

struct Segmentation {
  Mask mask;
  LabeledObjects objects;
};

Segmentation segment(const ProbabilityMap& proba, std::size_t cls, double threshold,
                     int connectivity = 0);
Segmentation segment(const ImageStack& stack, const PixelClassifier& classifier, std::size_t cls,
                     double threshold, int connectivity = 0);

// ---- OPT phantom ------------------------------------------------------------

struct OptPhantomSpec {
  std::size_t size = 64;    // square slice edge
  std::size_t slices = 24;
  std::size_t plaques = 30;
  double anatomy_level = 1.0;
  double plaque_level = 3.0;
  double plaque_radius_min = 1.5;
  double plaque_radius_max = 3.0;
  std::uint64_t seed = 1;
};

struct OptPhantom {
  RealImage volume;     // relative emission density
  LabelMap class_map;   // 0 background, 1 anatomy, 2 plaque
};

OptPhantom generate_opt_phantom(const OptPhantomSpec& spec);

// ---- configuration ----------------------------------------------------------

struct CalibrationBench {
  NoiseModel truth = NoiseModel::parametric(2.0, 100.0, 9.0);
  std::size_t levels = 20;
  std::size_t frames = 200;
  std::size_t sensor = 32;
};

struct OptSettings {
  OptPhantomSpec phantom;
  std::size_t n_angles = 90;
  double span_deg = 180.0;
  RampFilter filter = RampFilter::kHann;
  double projection_peak = 20000.0;  // ADU above the dark level
  double anatomy_threshold = 0.7;
  double plaque_threshold = 0.5;
  // Pixels trimmed from each in-plane edge of the reconstruction before
  // normalization and segmentation.
  std::size_t crop = 0;
};

struct PipelineConfig {
  std::string scenario = "2d";  // 2d | 3d | opt
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "rawscore_out";
  int workers = 0;  // 0: leave the process setting alone

  // Input: a generated phantom, or an image plus a dense label map for scribbles.
  std::optional<PhantomSpec> phantom;
  std::filesystem::path input;
  std::filesystem::path truth;

  // Noise model: file, inline parameters, or a simulated calibration bench.
  std::filesystem::path model_path;
  std::optional<NoiseModel> model;
  std::optional<CalibrationBench> calibrate;

  std::size_t n_replicates = 10;
  std::vector<CodecSpec> codecs;

  std::filesystem::path classifier_path;
  FeatureRecipe recipe;
  TrainOptions train;
  std::size_t scribbles_per_class = 150;

  double threshold = 0.5;
  int connectivity = 0;  // 0: 8 in 2D, 26 in 3D
  double max_distance = 5.0;
  double bin_width = 0.5;

  OptSettings opt;
  FeatureRecipe operators;

  // Canonical form used for hashing (excludes output_dir and workers).
  nlohmann::json canonical;
};

// Throws ConfigInvalid naming the offending key; relative paths resolve
// against base_dir. Referenced files must exist.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  bool write_artifacts = true;
  bool verbose = false;
};

struct PipelineResult {
  ToleranceReport report;
  nlohmann::json report_json;
};

// Stage errors are re-thrown with the stage name prefixed.
PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

// Bundled demo: 2D disks phantom, three codecs.
nlohmann::json demo_config();

}  // namespace rawscore
