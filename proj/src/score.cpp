#include "rawscore/score.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <tuple>

#include "rawscore/parallel.hpp"

namespace rawscore {

// ---- scalar statistics ------------------------------------------------------

Uncertainty predictive_uncertainty(std::span<const double> values) {
  require(values.size() >= 2, ErrorCode::kTooFewReplicates,
          "predictive uncertainty needs at least 2 replicate values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  Uncertainty u{mean, std::sqrt(ss / (n - 1.0)), false};
  // Spread at round-off level means the replicates agree exactly.
  if (u.sigma <= 1e-9 * (1.0 + std::abs(mean))) u.sigma = 0;
  u.degenerate = u.sigma == 0;
  return u;
}

double axial_difference(double a, double b) {
  double d = std::fmod(a - b + 90.0, 180.0);
  if (d < 0) d += 180.0;
  return d - 90.0;
}

Uncertainty predictive_uncertainty_axial(std::span<const double> degrees) {
  require(degrees.size() >= 2, ErrorCode::kTooFewReplicates,
          "predictive uncertainty needs at least 2 replicate values");
  double s = 0, c = 0;
  for (double a : degrees) {
    const double r = 2.0 * a * std::numbers::pi / 180.0;
    s += std::sin(r);
    c += std::cos(r);
  }
  const double centre = 0.5 * std::atan2(s, c) * 180.0 / std::numbers::pi;
  std::vector<double> dev;
  dev.reserve(degrees.size());
  for (double a : degrees) dev.push_back(axial_difference(a, centre));
  Uncertainty u = predictive_uncertainty(dev);
  u.mean = centre + u.mean;
  u.mean = std::fmod(u.mean, 180.0);
  if (u.mean < 0) u.mean += 180.0;
  return u;
}

double standard_score(double chi_raw, double chi_c, double sigma_raw) {
  require(sigma_raw > 0, ErrorCode::kDegenerateSpread, "sigma_raw is zero; score undefined");
  return (chi_raw - chi_c) / sigma_raw;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kTolerable: return "tolerable";
    case Verdict::kIntolerable: return "intolerable";
    case Verdict::kIndeterminate: return "indeterminate";
  }
  return "indeterminate";
}

Verdict verdict_of(std::optional<double> epsilon) {
  if (!epsilon || !std::isfinite(*epsilon)) return Verdict::kIndeterminate;
  return std::abs(*epsilon) < 1.0 ? Verdict::kTolerable : Verdict::kIntolerable;
}

// ---- matching ---------------------------------------------------------------

Pairing match_objects(std::span<const Centroid> raw, std::span<const Centroid> other,
                      double max_distance) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t j = 0; j < other.size(); ++j) {
      const double d = std::sqrt((raw[i].x - other[j].x) * (raw[i].x - other[j].x) +
                                 (raw[i].y - other[j].y) * (raw[i].y - other[j].y) +
                                 (raw[i].z - other[j].z) * (raw[i].z - other[j].z));
      if (d <= max_distance) candidates.emplace_back(d, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::optional<std::pair<std::size_t, double>>> partner(raw.size());
  std::vector<bool> taken(other.size(), false);
  for (const auto& [d, i, j] : candidates) {
    if (partner[i] || taken[j]) continue;
    partner[i] = std::make_pair(j, d);
    taken[j] = true;
  }
  Pairing p;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (partner[i]) {
      p.pairs.emplace_back(i, partner[i]->first);
      p.distances.push_back(partner[i]->second);
    } else {
      p.unpaired_raw.push_back(i);
    }
  }
  for (std::size_t j = 0; j < other.size(); ++j) {
    if (!taken[j]) p.unpaired_other.push_back(j);
  }
  return p;
}

// ---- distributions ----------------------------------------------------------

DeltaDistribution delta_distribution(std::span<const double> raw_values,
                                     std::span<const double> other_values, const Pairing& pairing,
                                     double bin_width, bool axial) {
  require(!pairing.pairs.empty(), ErrorCode::kEmptyPairing, "no matched pairs to compare");
  require(bin_width > 0, ErrorCode::kInvalidSpec, "bin width must be positive");
  DeltaDistribution d;
  d.bin_width = bin_width;
  for (const auto& [i, j] : pairing.pairs) {
    require(i < raw_values.size() && j < other_values.size(), ErrorCode::kDimMismatch,
            "pairing refers to missing objects");
    d.deltas.push_back(axial ? axial_difference(raw_values[i], other_values[j])
                             : raw_values[i] - other_values[j]);
  }
  const double n = static_cast<double>(d.deltas.size());
  d.mean = std::accumulate(d.deltas.begin(), d.deltas.end(), 0.0) / n;
  double ss = 0;
  for (double v : d.deltas) ss += (v - d.mean) * (v - d.mean);
  d.stddev = d.deltas.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const auto [lo, hi] = std::minmax_element(d.deltas.begin(), d.deltas.end());
  d.bin_origin = std::floor(*lo / bin_width) * bin_width;
  const double bins = std::floor((*hi - d.bin_origin) / bin_width) + 1;
  require(bins <= 1e6, ErrorCode::kInvalidSpec, "delta range too wide for the bin width");
  d.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : d.deltas) {
    auto b = static_cast<std::size_t>(std::floor((v - d.bin_origin) / bin_width));
    ++d.counts[std::min(b, d.counts.size() - 1)];
  }
  return d;
}

ScoreSummary averaged_scores(std::span<const std::optional<double>> epsilons) {
  ScoreSummary s;
  double sum = 0;
  for (const auto& e : epsilons) {
    if (e && std::isfinite(*e)) {
      sum += *e;
      ++s.n;
    } else {
      ++s.excluded;
    }
  }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0;
  for (const auto& e : epsilons) {
    if (e && std::isfinite(*e)) ss += (*e - s.mean) * (*e - s.mean);
  }
  s.stddev = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  return s;
}

// ---- per-object tables ------------------------------------------------------

ObjectTable object_table(const std::vector<ObjectRecord2D>& records) {
  ObjectTable t;
  for (auto p : kObjectParams2D) {
    t.params.emplace_back(p);
    t.axial.push_back(is_angle_param(p));
  }
  for (const auto& r : records) {
    t.centroids.push_back({r.x_cm, r.y_cm, 0});
    std::vector<double> v;
    for (std::size_t p = 0; p < kObjectParams2D.size(); ++p) v.push_back(param_value(r, p));
    t.values.push_back(std::move(v));
  }
  return t;
}

ObjectTable object_table(const std::vector<ObjectRecord3D>& records) {
  ObjectTable t;
  for (auto p : kObjectParams3D) {
    t.params.emplace_back(p);
    t.axial.push_back(false);
  }
  for (const auto& r : records) {
    t.centroids.push_back({r.x_cm, r.y_cm, r.z_cm});
    std::vector<double> v;
    for (std::size_t p = 0; p < kObjectParams3D.size(); ++p) v.push_back(param_value(r, p));
    t.values.push_back(std::move(v));
  }
  return t;
}

ObjectScores object_scores(const ObjectTable& raw, const std::vector<ObjectTable>& replicates,
                           const ObjectTable& compressed, double max_distance, double bin_width) {
  require(replicates.size() >= 2, ErrorCode::kTooFewReplicates,
          "per-object scores need at least 2 replicates");
  const std::size_t n_params = raw.params.size();
  const std::size_t n_obj = raw.values.size();
  for (const auto* t : {&compressed}) {
    require(t->params == raw.params, ErrorCode::kDimMismatch, "object tables differ in parameters");
  }

  // samples[object][param] over replicates with a matched object.
  std::vector<std::vector<std::vector<double>>> samples(
      n_obj, std::vector<std::vector<double>>(n_params));
  for (const auto& rep : replicates) {
    require(rep.params == raw.params, ErrorCode::kDimMismatch, "object tables differ in parameters");
    const auto m = match_objects(raw.centroids, rep.centroids, max_distance);
    for (const auto& [i, j] : m.pairs) {
      for (std::size_t p = 0; p < n_params; ++p) samples[i][p].push_back(rep.values[j][p]);
    }
  }

  ObjectScores out;
  out.params = raw.params;
  out.pairing = match_objects(raw.centroids, compressed.centroids, max_distance);
  std::vector<std::optional<std::size_t>> comp_of(n_obj);
  for (const auto& [i, j] : out.pairing.pairs) comp_of[i] = j;

  out.epsilon.assign(n_params, std::vector<std::optional<double>>(n_obj));
  for (std::size_t p = 0; p < n_params; ++p) {
    for (std::size_t i = 0; i < n_obj; ++i) {
      if (!comp_of[i] || samples[i][p].size() < 2) continue;
      const auto u = raw.axial[p] ? predictive_uncertainty_axial(samples[i][p])
                                  : predictive_uncertainty(samples[i][p]);
      if (u.degenerate) continue;
      const double chi_raw = raw.values[i][p];
      const double chi_c = compressed.values[*comp_of[i]][p];
      out.epsilon[p][i] = raw.axial[p] ? axial_difference(chi_raw, chi_c) / u.sigma
                                       : standard_score(chi_raw, chi_c, u.sigma);
    }
    out.summary.push_back(averaged_scores(out.epsilon[p]));
    if (!out.pairing.pairs.empty()) {
      std::vector<double> rv, cv;
      for (const auto& v : raw.values) rv.push_back(v[p]);
      for (const auto& v : compressed.values) cv.push_back(v[p]);
      out.deltas.push_back(delta_distribution(rv, cv, out.pairing, bin_width, raw.axial[p]));
    } else {
      out.deltas.emplace_back();
    }
  }
  return out;
}

// ---- operator scores --------------------------------------------------------

std::vector<OperatorScore> operator_scores(const RealImage& raw, const RealImage& compressed,
                                           const std::vector<RealImage>& replicates,
                                           const FeatureRecipe& operators) {
  require(replicates.size() >= 2, ErrorCode::kTooFewReplicates,
          "operator scores need at least 2 replicates");
  require(raw.dims() == compressed.dims(), ErrorCode::kDimMismatch,
          "compressed image differs in dims from raw");
  for (const auto& r : replicates) {
    require(r.dims() == raw.dims(), ErrorCode::kDimMismatch, "replicate differs in dims from raw");
  }
  FeatureRecipe recipe = operators;
  std::erase(recipe.kinds, FeatureKind::kRawIntensity);
  require(!recipe.kinds.empty(), ErrorCode::kInvalidSpec, "no operators requested");
  const auto fr = compute_features(raw, recipe);
  const auto fc = compute_features(compressed, recipe);
  const std::size_t nf = fr.n_features, np = fr.pixels();

  // Running replicate mean and sum of squares per (pixel, feature).
  std::vector<double> mean(np * nf, 0.0), m2(np * nf, 0.0);
  double count = 0;
  for (const auto& rep : replicates) {
    const auto f = compute_features(rep, recipe);
    count += 1;
    for (std::size_t k = 0; k < mean.size(); ++k) {
      const double v = f.values[k];
      const double delta = v - mean[k];
      mean[k] += delta / count;
      m2[k] += delta * (v - mean[k]);
    }
  }
  const auto names = recipe.feature_names();
  std::vector<OperatorScore> out(nf);
  parallel_for(nf, [&](std::size_t f) {
    OperatorScore s;
    s.name = names[f];
    double sum = 0, sum2 = 0;
    for (std::size_t p = 0; p < np; ++p) {
      const std::size_t k = p * nf + f;
      const double sd = std::sqrt(m2[k] / (count - 1.0));
      // Float features: treat spreads at rounding level as no spread.
      if (!(sd > 1e-6 * (1.0 + std::abs(mean[k])))) continue;
      const double e = (static_cast<double>(fr.values[k]) - fc.values[k]) / sd;
      sum += e;
      sum2 += e * e;
      ++s.pixels;
    }
    if (s.pixels) {
      const double n = static_cast<double>(s.pixels);
      s.mean = sum / n;
      s.stddev = s.pixels > 1 ? std::sqrt(std::max(0.0, (sum2 - n * s.mean * s.mean) / (n - 1))) : 0;
    }
    out[f] = s;
  });
  return out;
}

// ---- report -----------------------------------------------------------------

ParamScore score_parameter(const std::string& name, double chi_raw,
                           std::span<const double> replicate_values,
                           const std::map<std::string, double>& codec_values, bool axial) {
  const auto u = axial ? predictive_uncertainty_axial(replicate_values)
                       : predictive_uncertainty(replicate_values);
  ParamScore s;
  s.name = name;
  s.chi_raw = chi_raw;
  s.chi_raw_mean = u.mean;
  s.sigma_raw = u.sigma;
  for (const auto& [codec, chi_c] : codec_values) {
    CodecScore c;
    c.chi_c = chi_c;
    if (!u.degenerate) {
      c.epsilon = axial ? axial_difference(chi_raw, chi_c) / u.sigma
                        : standard_score(chi_raw, chi_c, u.sigma);
    }
    c.verdict = verdict_of(c.epsilon);
    s.codecs[codec] = c;
  }
  return s;
}

namespace {

nlohmann::json optional_number(std::optional<double> v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json to_json_value(const DeltaDistribution& d) {
  return {{"mean", d.mean},
          {"std", d.stddev},
          {"n", d.deltas.size()},
          {"bin_width", d.bin_width},
          {"bin_origin", d.bin_origin},
          {"counts", d.counts}};
}

constexpr const char* kReportSchema = R"json({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "rawscore tolerance report",
  "type": "object",
  "required": ["format", "version", "scenario", "provenance", "codecs", "global", "objects",
               "operators", "extra", "notes"],
  "additionalProperties": false,
  "properties": {
    "format": {"enum": ["rawscore-report"]},
    "version": {"enum": [1]},
    "scenario": {"enum": ["2d", "3d", "opt"]},
    "provenance": {"type": "object"},
    "codecs": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["id", "compression_ratio", "encoded_bytes"],
        "additionalProperties": false,
        "properties": {
          "id": {"type": "string"},
          "compression_ratio": {"type": "number", "minimum": 0},
          "encoded_bytes": {"type": "integer", "minimum": 0}
        }
      }
    },
    "global": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["parameter", "chi_raw", "chi_raw_mean", "sigma_raw", "codecs"],
        "additionalProperties": false,
        "properties": {
          "parameter": {"type": "string"},
          "chi_raw": {"type": "number"},
          "chi_raw_mean": {"type": "number"},
          "sigma_raw": {"type": "number", "minimum": 0},
          "codecs": {
            "type": "object",
            "additionalProperties": {
              "type": "object",
              "required": ["chi_c", "epsilon", "verdict"],
              "additionalProperties": false,
              "properties": {
                "chi_c": {"type": "number"},
                "epsilon": {"type": ["number", "null"]},
                "verdict": {"enum": ["tolerable", "intolerable", "indeterminate"]}
              }
            }
          }
        }
      }
    },
    "objects": {
      "type": "object",
      "additionalProperties": {
        "type": "object",
        "required": ["matching", "parameters"],
        "additionalProperties": false,
        "properties": {
          "matching": {
            "type": "object",
            "required": ["pairs", "unpaired_raw", "unpaired_compressed", "mean_distance"],
            "additionalProperties": false,
            "properties": {
              "pairs": {"type": "integer", "minimum": 0},
              "unpaired_raw": {"type": "integer", "minimum": 0},
              "unpaired_compressed": {"type": "integer", "minimum": 0},
              "mean_distance": {"type": "number", "minimum": 0}
            }
          },
          "parameters": {
            "type": "array",
            "items": {
              "type": "object",
              "required": ["parameter", "mean_epsilon", "std_epsilon", "n_objects", "excluded",
                           "verdict", "delta"],
              "additionalProperties": false,
              "properties": {
                "parameter": {"type": "string"},
                "mean_epsilon": {"type": "number"},
                "std_epsilon": {"type": "number", "minimum": 0},
                "n_objects": {"type": "integer", "minimum": 0},
                "excluded": {"type": "integer", "minimum": 0},
                "verdict": {"enum": ["tolerable", "intolerable", "indeterminate"]},
                "delta": {
                  "type": ["object", "null"],
                  "required": ["mean", "std", "n", "bin_width", "bin_origin", "counts"],
                  "properties": {
                    "mean": {"type": "number"},
                    "std": {"type": "number", "minimum": 0},
                    "n": {"type": "integer", "minimum": 1},
                    "bin_width": {"type": "number", "minimum": 0},
                    "bin_origin": {"type": "number"},
                    "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}}
                  }
                }
              }
            }
          }
        }
      }
    },
    "operators": {
      "type": "object",
      "additionalProperties": {
        "type": "object",
        "additionalProperties": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["operator", "mean_epsilon", "std_epsilon", "pixels"],
            "additionalProperties": false,
            "properties": {
              "operator": {"type": "string"},
              "mean_epsilon": {"type": "number"},
              "std_epsilon": {"type": "number", "minimum": 0},
              "pixels": {"type": "integer", "minimum": 0}
            }
          }
        }
      }
    },
    "extra": {"type": "object"},
    "notes": {"type": "array", "items": {"type": "string"}}
  }
})json";

bool type_matches(const std::string& type, const nlohmann::json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    return v.is_number_integer() ||
           (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  }
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

std::optional<std::string> check(const nlohmann::json& schema, const nlohmann::json& v,
                                 const std::string& where) {
  auto at = [&](const std::string& msg) { return std::optional<std::string>((where.empty() ? "/" : where) + ": " + msg); };
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& e : t) ok = ok || type_matches(e.get<std::string>(), v);
    } else {
      ok = type_matches(t.get<std::string>(), v);
    }
    if (!ok) return at("expected type " + t.dump());
  }
  if (schema.contains("enum")) {
    const auto& e = schema["enum"];
    if (std::find(e.begin(), e.end(), v) == e.end()) return at("value not in " + e.dump());
  }
  if (v.is_number()) {
    if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>()) {
      return at("below minimum");
    }
    if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>()) {
      return at("above maximum");
    }
  }
  if (v.is_object()) {
    if (schema.contains("required")) {
      for (const auto& k : schema["required"]) {
        if (!v.contains(k.get<std::string>())) return at("missing '" + k.get<std::string>() + "'");
      }
    }
    const auto* props = schema.contains("properties") ? &schema["properties"] : nullptr;
    for (const auto& [k, child] : v.items()) {
      const std::string path = where + "/" + k;
      if (props && props->contains(k)) {
        if (auto err = check((*props)[k], child, path)) return err;
      } else if (schema.contains("additionalProperties")) {
        const auto& extra = schema["additionalProperties"];
        if (extra.is_boolean()) {
          if (!extra.get<bool>()) return at("unexpected property '" + k + "'");
        } else if (auto err = check(extra, child, path)) {
          return err;
        }
      }
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
      return at("too few items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto err = check(schema["items"], v[i], where + "/" + std::to_string(i))) return err;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

const nlohmann::json& report_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(kReportSchema);
  return schema;
}

std::optional<std::string> schema_violation(const nlohmann::json& schema,
                                            const nlohmann::json& value) {
  return check(schema, value, "");
}

void validate_report(const nlohmann::json& report) {
  if (auto err = schema_violation(report_schema(), report)) {
    fail(ErrorCode::kSchemaViolation, *err);
  }
}

nlohmann::json report_to_json(const ToleranceReport& r) {
  nlohmann::json j;
  j["format"] = "rawscore-report";
  j["version"] = 1;
  j["scenario"] = r.scenario;
  j["provenance"] = r.provenance;

  j["codecs"] = nlohmann::json::array();
  for (const auto& c : r.codecs) {
    j["codecs"].push_back(
        {{"id", c.id}, {"compression_ratio", c.compression_ratio}, {"encoded_bytes", c.encoded_bytes}});
  }

  j["global"] = nlohmann::json::array();
  for (const auto& p : r.global) {
    nlohmann::json codecs = nlohmann::json::object();
    for (const auto& [id, c] : p.codecs) {
      codecs[id] = {{"chi_c", c.chi_c},
                    {"epsilon", optional_number(c.epsilon)},
                    {"verdict", std::string(to_string(c.verdict))}};
    }
    j["global"].push_back({{"parameter", p.name},
                           {"chi_raw", p.chi_raw},
                           {"chi_raw_mean", p.chi_raw_mean},
                           {"sigma_raw", p.sigma_raw},
                           {"codecs", codecs}});
  }

  j["objects"] = nlohmann::json::object();
  for (const auto& [id, s] : r.objects) {
    double mean_distance = 0;
    for (double d : s.pairing.distances) mean_distance += d;
    if (!s.pairing.distances.empty()) mean_distance /= static_cast<double>(s.pairing.distances.size());
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t p = 0; p < s.params.size(); ++p) {
      const auto& sum = s.summary[p];
      const Verdict v = sum.n ? verdict_of(sum.mean) : Verdict::kIndeterminate;
      params.push_back({{"parameter", s.params[p]},
                        {"mean_epsilon", sum.mean},
                        {"std_epsilon", sum.stddev},
                        {"n_objects", sum.n},
                        {"excluded", sum.excluded},
                        {"verdict", std::string(to_string(v))},
                        {"delta", s.deltas[p].deltas.empty() ? nlohmann::json(nullptr)
                                                             : to_json_value(s.deltas[p])}});
    }
    j["objects"][id] = {{"matching",
                         {{"pairs", s.pairing.pairs.size()},
                          {"unpaired_raw", s.pairing.unpaired_raw.size()},
                          {"unpaired_compressed", s.pairing.unpaired_other.size()},
                          {"mean_distance", mean_distance}}},
                        {"parameters", params}};
  }

  j["operators"] = nlohmann::json::object();
  for (const auto& [id, domains] : r.operators) {
    nlohmann::json d = nlohmann::json::object();
    for (const auto& [domain, ops] : domains) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& o : ops) {
        arr.push_back({{"operator", o.name},
                       {"mean_epsilon", o.mean},
                       {"std_epsilon", o.stddev},
                       {"pixels", o.pixels}});
      }
      d[domain] = arr;
    }
    j["operators"][id] = d;
  }
  j["extra"] = r.extra;
  j["notes"] = r.notes;
  validate_report(j);
  return j;
}

std::string dump_report(const nlohmann::json& report) { return report.dump(2) + "\n"; }

}  // namespace rawscore
