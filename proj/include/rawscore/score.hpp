#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rawscore/image.hpp"
#include "rawscore/mlseg.hpp"
#include "rawscore/morph.hpp"

namespace rawscore {

// ---- scalar statistics ------------------------------------------------------

struct Uncertainty {
  double mean = 0;
  double sigma = 0;  // sample standard deviation (n - 1)
  bool degenerate = false;  // sigma == 0 (spreads at round-off level count as 0)
};

Uncertainty predictive_uncertainty(std::span<const double> values);
// Axial angles in degrees (period 180): spread of deviations from the
// circular mean, each wrapped into [-90, 90).
Uncertainty predictive_uncertainty_axial(std::span<const double> degrees);

// Exactly (chi_raw - chi_c) / sigma_raw; DegenerateSpread when sigma_raw <= 0.
double standard_score(double chi_raw, double chi_c, double sigma_raw);
// Difference of axial angles wrapped into [-90, 90).
double axial_difference(double a, double b);

enum class Verdict { kTolerable, kIntolerable, kIndeterminate };
std::string_view to_string(Verdict v);
// |epsilon| < 1 is tolerable; a missing epsilon is indeterminate.
Verdict verdict_of(std::optional<double> epsilon);

// ---- object matching --------------------------------------------------------

struct Centroid {
  double x = 0, y = 0, z = 0;
};

struct Pairing {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (raw, other), ascending by raw
  std::vector<double> distances;                           // aligned with pairs
  std::vector<std::size_t> unpaired_raw;
  std::vector<std::size_t> unpaired_other;
};

// Greedy: all candidate pairs within max_distance sorted by (distance, raw,
// other) and accepted while both ends are free.
Pairing match_objects(std::span<const Centroid> raw, std::span<const Centroid> other,
                      double max_distance);

// ---- distributions ----------------------------------------------------------

struct DeltaDistribution {
  std::vector<double> deltas;  // raw - other, per pair
  double mean = 0;
  double stddev = 0;  // n - 1; 0 for a single pair
  double bin_width = 0.5;
  double bin_origin = 0;  // left edge of the first bin
  std::vector<std::size_t> counts;
};

DeltaDistribution delta_distribution(std::span<const double> raw_values,
                                     std::span<const double> other_values, const Pairing& pairing,
                                     double bin_width = 0.5, bool axial = false);

struct ScoreSummary {
  double mean = 0;
  double stddev = 0;
  std::size_t n = 0;
  std::size_t excluded = 0;  // objects with no usable epsilon
};

ScoreSummary averaged_scores(std::span<const std::optional<double>> epsilons);

// ---- per-object tables ------------------------------------------------------

struct ObjectTable {
  std::vector<std::string> params;
  std::vector<bool> axial;
  std::vector<Centroid> centroids;
  std::vector<std::vector<double>> values;  // [object][param]
};

ObjectTable object_table(const std::vector<ObjectRecord2D>& records);
ObjectTable object_table(const std::vector<ObjectRecord3D>& records);

// Per-object sigma_raw comes from the replicate objects matched to each raw
// object; epsilon uses the compressed object matched to the same raw object.
struct ObjectScores {
  std::vector<std::string> params;
  std::vector<std::vector<std::optional<double>>> epsilon;  // [param][raw object]
  std::vector<ScoreSummary> summary;                        // [param]
  std::vector<DeltaDistribution> deltas;                    // [param], raw vs compressed
  Pairing pairing;                                          // raw vs compressed
};

ObjectScores object_scores(const ObjectTable& raw, const std::vector<ObjectTable>& replicates,
                           const ObjectTable& compressed, double max_distance,
                           double bin_width = 0.5);

// ---- operator scores --------------------------------------------------------

struct OperatorScore {
  std::string name;  // feature name, e.g. "laplacian_s1.6"
  double mean = 0;   // mean per-pixel epsilon
  double stddev = 0;
  std::size_t pixels = 0;  // pixels with a non-zero replicate spread
};

// Every non-raw feature of the recipe is one operator.
std::vector<OperatorScore> operator_scores(const RealImage& raw, const RealImage& compressed,
                                           const std::vector<RealImage>& replicates,
                                           const FeatureRecipe& operators);

// ---- report -----------------------------------------------------------------

struct CodecScore {
  double chi_c = 0;
  std::optional<double> epsilon;
  Verdict verdict = Verdict::kIndeterminate;
};

struct ParamScore {
  std::string name;
  double chi_raw = 0;
  double chi_raw_mean = 0;  // mean over replicates
  double sigma_raw = 0;
  std::map<std::string, CodecScore> codecs;
};

// Global parameter score across codecs.
ParamScore score_parameter(const std::string& name, double chi_raw,
                           std::span<const double> replicate_values,
                           const std::map<std::string, double>& codec_values, bool axial = false);

struct CodecInfo {
  std::string id;
  double compression_ratio = 0;
  std::size_t encoded_bytes = 0;
};

struct ToleranceReport {
  std::string scenario;  // "2d", "3d" or "opt"
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<CodecInfo> codecs;
  std::vector<ParamScore> global;
  // Per codec: per-object scores.
  std::map<std::string, ObjectScores> objects;
  // Per codec: operator scores, keyed by the domain they were computed in.
  std::map<std::string, std::map<std::string, std::vector<OperatorScore>>> operators;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> notes;
};

nlohmann::json report_to_json(const ToleranceReport& report);
// Bundled JSON schema for reports.
const nlohmann::json& report_schema();
// Throws SchemaViolation with the offending JSON pointer.
void validate_report(const nlohmann::json& report);
// Minimal JSON-schema check (type, required, properties, additionalProperties,
// items, enum, minimum, maximum, minItems); returns the first violation.
std::optional<std::string> schema_violation(const nlohmann::json& schema,
                                            const nlohmann::json& value);

// Canonical text: two-space indentation and a trailing newline.
std::string dump_report(const nlohmann::json& report);

}  // namespace rawscore
