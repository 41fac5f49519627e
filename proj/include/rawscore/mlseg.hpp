#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rawscore/image.hpp"

namespace rawscore {

// ---- filtering --------------------------------------------------------------

// Separable Gaussian (derivative) filtering with half-sample-symmetric
// reflection at the borders. Kernels are truncated at 4 sigma. Derivative
// kernels are normalized on polynomials: order 1 maps a unit ramp to 1,
// order 2 maps x^2/2 to 1.
std::vector<double> gaussian_kernel(double sigma, int order);
// orders[axis] in {0,1,2}; axes beyond the image's dimensionality are ignored.
RealImage gaussian_derivative(const RealImage& image, double sigma, std::array<int, 3> orders);
RealImage gaussian_filter(const RealImage& image, double sigma);

// ---- features ---------------------------------------------------------------

enum class FeatureKind {
  kRawIntensity,
  kGaussian,
  kGradientMagnitude,
  kLaplacian,
  kHessianEigenvalues,
  kStructureTensorEigenvalues,
};

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

struct FeatureRecipe {
  std::vector<double> sigmas{0.7, 1.0, 1.6, 3.5, 5.0};
  std::vector<FeatureKind> kinds{FeatureKind::kRawIntensity,      FeatureKind::kGaussian,
                                 FeatureKind::kGradientMagnitude, FeatureKind::kLaplacian,
                                 FeatureKind::kHessianEigenvalues,
                                 FeatureKind::kStructureTensorEigenvalues};
  int dimensionality = 2;

  void validate() const;
  std::size_t feature_count() const;
  std::vector<std::string> feature_names() const;
  std::string hash() const;
  friend bool operator==(const FeatureRecipe&, const FeatureRecipe&) = default;
};

void to_json(nlohmann::json& j, const FeatureRecipe& recipe);
void from_json(const nlohmann::json& j, FeatureRecipe& recipe);

// Pixel-major feature matrix: values[p * n_features + f].
struct FeatureStack {
  Dims dims;
  std::size_t n_features = 0;
  std::vector<float> values;

  float at(std::size_t pixel, std::size_t feature) const {
    return values[pixel * n_features + feature];
  }
  std::size_t pixels() const { return dims.count(); }
};

FeatureStack compute_features(const ImageStack& stack, const FeatureRecipe& recipe);
FeatureStack compute_features(const RealImage& image, const FeatureRecipe& recipe);

// One named operator response (e.g. "gaussian_s1.6") as an image.
RealImage feature_image(const FeatureStack& features, std::size_t feature);

// ---- random forest ----------------------------------------------------------

struct LabelScribbles {
  std::vector<std::string> classes;
  // (flat pixel index, class id)
  std::vector<std::pair<std::size_t, std::uint32_t>> samples;
};

// Random scribbles drawn from a dense class map (value = class id); pixels
// whose class differs from any 4/6-neighbour are skipped when avoid_edges.
LabelScribbles sample_scribbles(const LabelMap& class_map, std::vector<std::string> classes,
                                std::size_t per_class, std::uint64_t seed, bool avoid_edges = true);

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  float threshold = 0;        // go left when value <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::vector<std::uint32_t> counts;  // leaf class histogram
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct TrainOptions {
  std::size_t n_trees = 100;
  std::size_t min_leaf = 2;
  std::size_t mtry = 0;  // 0: floor(sqrt(F))
  std::uint64_t seed = 0;
};

struct PixelClassifier {
  FeatureRecipe recipe;
  std::vector<std::string> classes;
  std::uint64_t train_seed = 0;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;

  std::string hash() const;
  friend bool operator==(const PixelClassifier&, const PixelClassifier&) = default;
};

void to_json(nlohmann::json& j, const PixelClassifier& classifier);
void from_json(const nlohmann::json& j, PixelClassifier& classifier);
PixelClassifier load_classifier(const std::filesystem::path& path);
void save_classifier(const PixelClassifier& classifier, const std::filesystem::path& path);

PixelClassifier train_classifier(const FeatureStack& features, const LabelScribbles& scribbles,
                                 const FeatureRecipe& recipe, const TrainOptions& options);

// Pixel-major class probabilities: values[p * n_classes + c].
struct ProbabilityMap {
  Dims dims;
  std::size_t n_classes = 0;
  std::vector<double> values;

  double at(std::size_t pixel, std::size_t cls) const { return values[pixel * n_classes + cls]; }
};

ProbabilityMap predict_proba(const PixelClassifier& classifier, const FeatureStack& features);
// Recomputes features with the classifier's recipe first.
ProbabilityMap predict_proba(const PixelClassifier& classifier, const ImageStack& stack);

// 1 where P[class] >= threshold.
Mask threshold_mask(const ProbabilityMap& proba, std::size_t cls, double threshold);
RealImage probability_image(const ProbabilityMap& proba, std::size_t cls);

}  // namespace rawscore
