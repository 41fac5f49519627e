#include "rawscore/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "rawscore/parallel.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- segmentation -----------------------------------------------------------

Segmentation segment(const ProbabilityMap& proba, std::size_t cls, double threshold,
                     int connectivity) {
  Segmentation s;
  s.mask = threshold_mask(proba, cls, threshold);
  s.objects = connectivity == 0 ? label_components(s.mask) : label_components(s.mask, connectivity);
  return s;
}

Segmentation segment(const ImageStack& stack, const PixelClassifier& classifier, std::size_t cls,
                     double threshold, int connectivity) {
  return segment(predict_proba(classifier, stack), cls, threshold, connectivity);
}

// ---- OPT phantom ------------------------------------------------------------

OptPhantom generate_opt_phantom(const OptPhantomSpec& spec) {
  require(spec.size >= 16 && spec.slices >= 4, ErrorCode::kInvalidSpec, "OPT phantom too small");
  require(spec.plaque_radius_min > 0 && spec.plaque_radius_max >= spec.plaque_radius_min,
          ErrorCode::kInvalidSpec, "bad plaque radius range");
  const Dims dims{spec.size, spec.size, spec.slices};
  const double n = static_cast<double>(spec.size);
  const double cx = (n - 1) / 2, cy = cx, cz = (static_cast<double>(spec.slices) - 1) / 2;
  const double ax = 0.36 * n, ay = 0.28 * n, az = 0.42 * static_cast<double>(spec.slices);

  struct Ball {
    double x, y, z, r;
  };
  std::vector<Ball> balls;
  PhiloxEngine rng(spec.seed, 0x4F5054);
  for (std::size_t attempt = 0; balls.size() < spec.plaques && attempt < 200 * spec.plaques + 200;
       ++attempt) {
    // Uniform point in the inner 75% of the organ ellipsoid.
    const double u = 2 * rng.uniform() - 1, v = 2 * rng.uniform() - 1, w = 2 * rng.uniform() - 1;
    if (u * u + v * v + w * w > 1) continue;
    const double r = spec.plaque_radius_min +
                     (spec.plaque_radius_max - spec.plaque_radius_min) * rng.uniform();
    const Ball b{cx + 0.75 * ax * u, cy + 0.75 * ay * v, cz + 0.6 * az * w, r};
    bool clear = true;
    for (const auto& o : balls) {
      const double d = std::sqrt((b.x - o.x) * (b.x - o.x) + (b.y - o.y) * (b.y - o.y) +
                                 (b.z - o.z) * (b.z - o.z));
      if (d < b.r + o.r + 1.5) clear = false;
    }
    if (clear) balls.push_back(b);
  }

  auto classify = [&](double x, double y, double z) -> std::uint32_t {
    for (const auto& b : balls) {
      if ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y) + (z - b.z) * (z - b.z) <= b.r * b.r) {
        return 2;
      }
    }
    const double e = (x - cx) * (x - cx) / (ax * ax) + (y - cy) * (y - cy) / (ay * ay) +
                     (z - cz) * (z - cz) / (az * az);
    return e <= 1 ? 1 : 0;
  };
  const double level[3] = {0.0, spec.anatomy_level, spec.plaque_level};

  OptPhantom out{RealImage(dims), LabelMap(dims)};
  parallel_for(dims.depth, [&](std::size_t z) {
    for (std::size_t y = 0; y < dims.height; ++y) {
      for (std::size_t x = 0; x < dims.width; ++x) {
        const auto fx = static_cast<double>(x), fy = static_cast<double>(y),
                   fz = static_cast<double>(z);
        // 2x2x2 supersampling for partial-volume grading.
        double acc = 0;
        for (int s = 0; s < 8; ++s) {
          acc += level[classify(fx + ((s & 1) ? 0.25 : -0.25), fy + ((s & 2) ? 0.25 : -0.25),
                                fz + ((s & 4) ? 0.25 : -0.25))];
        }
        out.volume.at(x, y, z) = acc / 8;
        out.class_map.at(x, y, z) = classify(fx, fy, fz);
      }
    }
  });
  return out;
}

// ---- configuration ----------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  fail(ErrorCode::kConfigInvalid, "'" + key + "': " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error(where, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) config_error(where.empty() ? k : where + "." + k, "unknown key");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    config_error(where.empty() ? key : where + "." + key, e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

fs::path existing_file(const fs::path& base, const json& j, const std::string& key) {
  if (!j.is_string()) config_error(key, "expected a path string");
  const fs::path p = resolve(base, j.get<std::string>());
  if (!fs::is_regular_file(p)) config_error(key, "file not found: " + p.string());
  return p;
}

template <typename Fn>
void wrapped(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigInvalid) throw;
    config_error(key, e.what());
  } catch (const json::exception& e) {
    config_error(key, e.what());
  }
}

template <typename T>
Grid<T> crop_xy(const Grid<T>& g, std::size_t c) {
  if (c == 0) return g;
  const Dims d = g.dims();
  Grid<T> out(Dims{d.width - 2 * c, d.height - 2 * c, d.depth});
  for (std::size_t z = 0; z < d.depth; ++z)
    for (std::size_t y = 0; y < out.dims().height; ++y)
      for (std::size_t x = 0; x < out.dims().width; ++x) out.at(x, y, z) = g.at(x + c, y + c, z);
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

FeatureRecipe default_operators() {
  FeatureRecipe r;
  r.sigmas = {1.0, 2.0, 4.0};
  r.kinds = {FeatureKind::kGaussian, FeatureKind::kGradientMagnitude, FeatureKind::kLaplacian,
             FeatureKind::kHessianEigenvalues};
  return r;
}

}  // namespace

PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "", {"version", "scenario", "seed", "output_dir", "workers", "phantom", "input",
                     "truth", "model", "n_replicates", "codecs", "classifier", "segmentation",
                     "matching", "opt", "operators"});
  PipelineConfig c;
  int version = 0;
  read(j, "version", version, "");
  if (version != 1) config_error("version", "only version 1 is supported");
  read(j, "scenario", c.scenario, "");
  if (c.scenario != "2d" && c.scenario != "3d" && c.scenario != "opt") {
    config_error("scenario", "expected 2d, 3d or opt");
  }
  read(j, "seed", c.seed, "");
  if (j.contains("output_dir")) {
    std::string out;
    read(j, "output_dir", out, "");
    c.output_dir = resolve(base_dir, out);
  }
  read(j, "workers", c.workers, "");
  if (c.workers < 0) config_error("workers", "must be >= 0");

  // Input.
  if (c.scenario != "opt") {
    if (j.contains("phantom") == j.contains("input")) {
      config_error("phantom", "give exactly one of 'phantom' or 'input'");
    }
    if (j.contains("phantom")) {
      check_keys(j.at("phantom"), "phantom",
                 {"kind", "width", "height", "depth", "bit_depth", "voxel_size", "background",
                  "foreground", "level", "count", "radius", "radius_jitter", "min_axis_ratio",
                  "edge_width", "intensity_jitter", "non_overlapping", "min_separation", "margin",
                  "seed"});
      wrapped("phantom", [&] { c.phantom = j.at("phantom").get<PhantomSpec>(); });
      const bool volumetric = c.phantom->kind == PhantomKind::kSpheres3d;
      if (volumetric != (c.scenario == "3d")) {
        config_error("phantom.kind", "phantom dimensionality does not match the scenario");
      }
    } else {
      c.input = existing_file(base_dir, j.at("input"), "input");
      if (!j.contains("truth")) config_error("truth", "required with 'input' to draw scribbles");
    }
    if (j.contains("truth")) c.truth = existing_file(base_dir, j.at("truth"), "truth");
  } else if (j.contains("phantom") || j.contains("input")) {
    config_error("phantom", "the opt scenario takes its phantom from 'opt.phantom'");
  }

  // Noise model.
  if (!j.contains("model")) config_error("model", "required");
  {
    const json& m = j.at("model");
    check_keys(m, "model", {"path", "inline", "calibrate"});
    if (m.size() != 1) config_error("model", "give exactly one of path, inline or calibrate");
    if (m.contains("path")) c.model_path = existing_file(base_dir, m.at("path"), "model.path");
    if (m.contains("inline")) {
      wrapped("model.inline", [&] {
        c.model = m.at("inline").get<NoiseModel>();
        validate(*c.model);
      });
    }
    if (m.contains("calibrate")) {
      const json& b = m.at("calibrate");
      check_keys(b, "model.calibrate", {"K", "offset", "read_variance", "saturation", "levels",
                                        "frames", "sensor"});
      CalibrationBench bench;
      double k = bench.truth.gain, off = bench.truth.offset, rv = bench.truth.read_variance,
             sat = bench.truth.saturation;
      read(b, "K", k, "model.calibrate");
      read(b, "offset", off, "model.calibrate");
      read(b, "read_variance", rv, "model.calibrate");
      read(b, "saturation", sat, "model.calibrate");
      read(b, "levels", bench.levels, "model.calibrate");
      read(b, "frames", bench.frames, "model.calibrate");
      read(b, "sensor", bench.sensor, "model.calibrate");
      wrapped("model.calibrate", [&] {
        bench.truth = NoiseModel::parametric(k, off, rv, sat);
        validate(bench.truth);
      });
      if (bench.levels < 8) config_error("model.calibrate.levels", "need at least 8 levels");
      if (bench.frames < 2 || bench.sensor < 2) {
        config_error("model.calibrate", "need at least 2 frames on a 2x2 sensor");
      }
      c.calibrate = bench;
    }
  }

  read(j, "n_replicates", c.n_replicates, "");
  if (c.n_replicates < 2) config_error("n_replicates", "need at least 2 replicates");

  if (!j.contains("codecs") || !j.at("codecs").is_array() || j.at("codecs").empty()) {
    config_error("codecs", "expected a non-empty array of codec ids");
  }
  std::set<std::string> seen;
  for (const auto& e : j.at("codecs")) {
    if (!e.is_string()) config_error("codecs", "codec ids are strings");
    wrapped("codecs", [&] { c.codecs.push_back(CodecSpec::parse(e.get<std::string>())); });
    if (!seen.insert(c.codecs.back().to_string()).second) {
      config_error("codecs", "duplicate codec " + c.codecs.back().to_string());
    }
  }

  // Classifier and its recipe.
  const int dim = c.scenario == "2d" ? 2 : 3;
  c.recipe.dimensionality = dim;
  if (c.scenario != "2d") c.recipe.sigmas = {0.7, 1.0, 1.6, 3.5};
  if (j.contains("classifier")) {
    const json& cl = j.at("classifier");
    check_keys(cl, "classifier", {"path", "train"});
    if (cl.size() != 1) config_error("classifier", "give exactly one of path or train");
    if (cl.contains("path")) {
      c.classifier_path = existing_file(base_dir, cl.at("path"), "classifier.path");
    } else {
      const json& t = cl.at("train");
      check_keys(t, "classifier.train",
                 {"recipe", "n_trees", "min_leaf", "mtry", "scribbles_per_class"});
      if (t.contains("recipe")) {
        wrapped("classifier.train.recipe", [&] {
          json r = t.at("recipe");
          if (!r.contains("dimensionality")) r["dimensionality"] = dim;
          c.recipe = r.get<FeatureRecipe>();
        });
      }
      read(t, "n_trees", c.train.n_trees, "classifier.train");
      read(t, "min_leaf", c.train.min_leaf, "classifier.train");
      read(t, "mtry", c.train.mtry, "classifier.train");
      read(t, "scribbles_per_class", c.scribbles_per_class, "classifier.train");
      if (c.train.n_trees == 0) config_error("classifier.train.n_trees", "must be positive");
      if (c.scribbles_per_class == 0) {
        config_error("classifier.train.scribbles_per_class", "must be positive");
      }
    }
  }

  if (j.contains("segmentation")) {
    const json& s = j.at("segmentation");
    check_keys(s, "segmentation", {"threshold", "connectivity"});
    read(s, "threshold", c.threshold, "segmentation");
    read(s, "connectivity", c.connectivity, "segmentation");
    if (!(c.threshold > 0 && c.threshold <= 1)) {
      config_error("segmentation.threshold", "must be in (0, 1]");
    }
    const std::set<int> ok = dim == 2 ? std::set<int>{0, 4, 8} : std::set<int>{0, 6, 26};
    if (!ok.count(c.connectivity)) config_error("segmentation.connectivity", "invalid value");
  }
  if (c.scenario == "3d") c.max_distance = 3.0;
  if (j.contains("matching")) {
    const json& m = j.at("matching");
    check_keys(m, "matching", {"max_distance", "bin_width"});
    read(m, "max_distance", c.max_distance, "matching");
    read(m, "bin_width", c.bin_width, "matching");
    if (!(c.max_distance > 0)) config_error("matching.max_distance", "must be positive");
    if (!(c.bin_width > 0)) config_error("matching.bin_width", "must be positive");
  }

  if (j.contains("opt")) {
    if (c.scenario != "opt") config_error("opt", "only valid for the opt scenario");
    const json& o = j.at("opt");
    check_keys(o, "opt", {"phantom", "n_angles", "span", "filter", "projection_peak",
                          "anatomy_threshold", "plaque_threshold", "crop"});
    if (o.contains("phantom")) {
      const json& p = o.at("phantom");
      check_keys(p, "opt.phantom", {"size", "slices", "plaques", "anatomy_level", "plaque_level",
                                    "plaque_radius_min", "plaque_radius_max", "seed"});
      auto& ps = c.opt.phantom;
      read(p, "size", ps.size, "opt.phantom");
      read(p, "slices", ps.slices, "opt.phantom");
      read(p, "plaques", ps.plaques, "opt.phantom");
      read(p, "anatomy_level", ps.anatomy_level, "opt.phantom");
      read(p, "plaque_level", ps.plaque_level, "opt.phantom");
      read(p, "plaque_radius_min", ps.plaque_radius_min, "opt.phantom");
      read(p, "plaque_radius_max", ps.plaque_radius_max, "opt.phantom");
      read(p, "seed", ps.seed, "opt.phantom");
    }
    read(o, "n_angles", c.opt.n_angles, "opt");
    read(o, "span", c.opt.span_deg, "opt");
    if (o.contains("filter")) {
      wrapped("opt.filter",
              [&] { c.opt.filter = ramp_filter_from_string(o.at("filter").get<std::string>()); });
    }
    read(o, "projection_peak", c.opt.projection_peak, "opt");
    read(o, "anatomy_threshold", c.opt.anatomy_threshold, "opt");
    read(o, "plaque_threshold", c.opt.plaque_threshold, "opt");
    read(o, "crop", c.opt.crop, "opt");
    if (2 * c.opt.crop >= c.opt.phantom.size) config_error("opt.crop", "crop removes the whole slice");
    if (c.opt.n_angles < 16) config_error("opt.n_angles", "need at least 16 angles");
    if (!(c.opt.projection_peak > 0)) config_error("opt.projection_peak", "must be positive");
  }

  c.operators = default_operators();
  if (j.contains("operators")) {
    wrapped("operators", [&] { c.operators = j.at("operators").get<FeatureRecipe>(); });
  }

  c.canonical = j;
  c.canonical.erase("output_dir");
  c.canonical.erase("workers");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfigInvalid, "cannot open config " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kConfigInvalid, "config is not valid JSON: " + path.string());
  return parse_config(j, path.parent_path());
}

json demo_config() {
  return json::parse(R"json({
  "version": 1,
  "scenario": "2d",
  "seed": 2024,
  "output_dir": "demo_out",
  "phantom": {"kind": "disks2d", "width": 256, "height": 256, "count": 40, "radius": 9,
              "radius_jitter": 2, "background": 400, "foreground": 1400, "edge_width": 1.5,
              "intensity_jitter": 0.1, "seed": 7},
  "model": {"calibrate": {"K": 2.0, "offset": 100, "read_variance": 9, "levels": 20,
                          "frames": 100, "sensor": 32}},
  "n_replicates": 10,
  "codecs": ["bit8", "jpeg-ratio:10", "noisenorm"],
  "classifier": {"train": {"n_trees": 40, "scribbles_per_class": 200}},
  "segmentation": {"threshold": 0.5},
  "matching": {"max_distance": 5, "bin_width": 0.5},
  "operators": {"sigmas": [1, 2, 4],
                "kinds": ["gaussian", "gradient_magnitude", "laplacian", "hessian_eigenvalues"]}
})json");
}

// ---- run --------------------------------------------------------------------

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& config, const RunOptions& options)
      : c_(config), o_(options) {}

  PipelineResult run();

 private:
  template <typename Fn>
  auto stage(const char* name, Fn&& fn) {
    if (o_.verbose) std::cerr << "[rawscore] " << name << "\n";
    try {
      return fn();
    } catch (const Error& e) {
      std::string what = e.what();
      const auto colon = what.find(": ");
      if (colon != std::string::npos) what = what.substr(colon + 2);
      throw Error(e.code(), std::string("stage '") + name + "': " + what);
    }
  }

  std::uint64_t seed_for(const std::string& stage) {
    const std::uint64_t s = derive_seed(c_.seed, stage);
    seeds_[stage] = s;
    return s;
  }

  fs::path out(const std::string& name) const { return c_.output_dir / name; }

  static std::string file_id(std::string id) {
    for (auto& ch : id) {
      if (ch == ':' || ch == '.') ch = '_';
    }
    return id;
  }

  void resolve_model();
  PixelClassifier resolve_classifier(const ImageStack& train_image, const LabelMap& class_map,
                                     std::vector<std::string> classes);
  std::vector<CodecResult> run_codecs(const ImageStack& stack);
  void run_planar();
  void run_opt();
  void finish_provenance();

  const PipelineConfig& c_;
  const RunOptions& o_;
  NoiseModel model_;
  PixelClassifier classifier_;
  std::map<std::string, std::uint64_t> seeds_;
  ToleranceReport report_;
};

void Runner::resolve_model() {
  stage("model", [&] {
    if (!c_.model_path.empty()) {
      model_ = load_noise_model(c_.model_path);
    } else if (c_.model) {
      model_ = *c_.model;
    } else {
      const auto& b = *c_.calibrate;
      const auto series = simulate_calibration_bench(b.truth, Dims{b.sensor, b.sensor, 1}, b.levels,
                                                     b.frames, seed_for("calibrate"));
      model_ = fit_noise_model(series);
      report_.extra["calibration"] = {{"K_true", b.truth.gain},
                                      {"K_fit", model_.gain},
                                      {"read_variance_true", b.truth.read_variance},
                                      {"read_variance_fit", model_.read_variance},
                                      {"offset_fit", model_.offset},
                                      {"saturation_fit", model_.saturation}};
    }
    validate(model_);
    if (o_.write_artifacts) save_noise_model(model_, out("noise_model.json"));
    return 0;
  });
}

PixelClassifier Runner::resolve_classifier(const ImageStack& train_image,
                                           const LabelMap& class_map,
                                           std::vector<std::string> classes) {
  return stage("classifier", [&] {
    PixelClassifier clf;
    if (!c_.classifier_path.empty()) {
      clf = load_classifier(c_.classifier_path);
      require(clf.classes.size() == classes.size(), ErrorCode::kRecipeMismatch,
              "classifier has " + std::to_string(clf.classes.size()) + " classes, scenario needs " +
                  std::to_string(classes.size()));
    } else {
      const auto scribbles = sample_scribbles(class_map, std::move(classes), c_.scribbles_per_class,
                                              seed_for("scribbles"));
      TrainOptions opts = c_.train;
      opts.seed = seed_for("train");
      clf = train_classifier(compute_features(train_image, c_.recipe), scribbles, c_.recipe, opts);
    }
    if (o_.write_artifacts) save_classifier(clf, out("classifier.json"));
    return clf;
  });
}

std::vector<CodecResult> Runner::run_codecs(const ImageStack& stack) {
  return stage("compress", [&] {
    std::vector<CodecResult> results;
    const std::uint64_t seed = seed_for("codec");
    for (const auto& spec : c_.codecs) {
      results.push_back(apply_codec(stack, spec, &model_, seed));
      report_.codecs.push_back({spec.to_string(), results.back().compression_ratio,
                                results.back().encoded_bytes});
      report_.extra["resolved_codecs"][spec.to_string()] = results.back().codec.to_string();
    }
    return results;
  });
}

void Runner::finish_provenance() {
  json seeds = json::object();
  seeds["global"] = c_.seed;
  for (const auto& [k, v] : seeds_) seeds[k] = v;
  report_.provenance["tool"] = "rawscore";
  report_.provenance["report_version"] = 1;
  report_.provenance["config_hash"] = hex64(fnv1a64(c_.canonical.dump()));
  report_.provenance["seeds"] = seeds;
  report_.provenance["model_hash"] = model_hash(model_);
  report_.provenance["classifier_hash"] = classifier_.hash();
  report_.provenance["recipe_hash"] = classifier_.recipe.hash();
  report_.provenance["operator_recipe_hash"] = c_.operators.hash();
  report_.provenance["n_replicates"] = c_.n_replicates;
  json codecs = json::array();
  for (const auto& s : c_.codecs) codecs.push_back(s.to_string());
  report_.provenance["codecs"] = codecs;
}

// 2D images and 3D stacks share one flow; only the object measurements differ.
void Runner::run_planar() {
  const bool volumetric = c_.scenario == "3d";
  ImageStack raw;
  LabelMap truth;
  std::optional<ImageStack> scene;
  stage("input", [&] {
    if (c_.phantom) {
      auto ph = generate_phantom(*c_.phantom);
      raw = acquire(ph.image, model_, seed_for("acquire"));
      scene = std::move(ph.image);
      truth = std::move(ph.truth);
      report_.provenance["input"] = json(*c_.phantom);
    } else {
      raw = read_stack(c_.input);
      truth = read_labels(c_.truth);
      require(truth.dims() == raw.dims(), ErrorCode::kDimMismatch,
              "truth labels do not match the input image");
      report_.provenance["input"] = c_.input.filename().string();
    }
    require(raw.dims().is_2d() != volumetric, ErrorCode::kDimMismatch,
            "input dimensionality does not match the scenario");
    if (o_.write_artifacts) write_stack(raw, out("raw.tif"));
    return 0;
  });

  LabelMap class_map(truth.dims());
  for (std::size_t i = 0; i < truth.size(); ++i) class_map[i] = truth[i] > 0 ? 1 : 0;
  classifier_ = resolve_classifier(raw, class_map, {"background", "object"});

  const auto replicates = stage("synth", [&] {
    auto reps = generate_raw_equivalents(raw, model_, {c_.n_replicates, seed_for("synth"), true});
    if (o_.write_artifacts) write_stack(reps.front(), out("replicate_000.tif"));
    return reps;
  });
  const auto coded = run_codecs(raw);
  if (o_.write_artifacts) {
    for (std::size_t k = 0; k < coded.size(); ++k) {
      write_stack(coded[k].decoded, out("decoded_" + file_id(c_.codecs[k].to_string()) + ".tif"));
    }
  }

  struct Measured {
    LabeledObjects objects;
    GlobalParams global;
    ObjectTable table;
  };
  auto measure = [&](const ImageStack& img, const std::string& tag) {
    Measured m;
    m.objects = segment(img, classifier_, 1, c_.threshold, c_.connectivity).objects;
    m.global = global_params(m.objects);
    if (volumetric) {
      const auto rec = object_params_3d(m.objects, img.voxel_size());
      m.table = object_table(rec);
      if (o_.write_artifacts && !tag.empty()) write_objects_csv(rec, out("objects_" + tag + ".csv"));
    } else {
      const auto rec = object_params_2d(m.objects);
      m.table = object_table(rec);
      if (o_.write_artifacts && !tag.empty()) write_objects_csv(rec, out("objects_" + tag + ".csv"));
    }
    if (o_.write_artifacts && !tag.empty()) write_labels(m.objects.labels, out("labels_" + tag + ".tif"));
    return m;
  };

  const auto [raw_m, rep_m, codec_m] = stage("segment", [&] {
    Measured r = measure(raw, "raw");
    std::vector<Measured> reps;
    for (const auto& rep : replicates) reps.push_back(measure(rep, ""));
    std::vector<Measured> cod;
    for (std::size_t k = 0; k < coded.size(); ++k) {
      cod.push_back(measure(coded[k].decoded, file_id(c_.codecs[k].to_string())));
    }
    return std::make_tuple(std::move(r), std::move(reps), std::move(cod));
  });

  stage("score", [&] {
    auto global_score = [&](const std::string& name, auto get) {
      std::vector<double> reps;
      for (const auto& m : rep_m) reps.push_back(get(m.global));
      std::map<std::string, double> codecs;
      for (std::size_t k = 0; k < coded.size(); ++k) {
        codecs[c_.codecs[k].to_string()] = get(codec_m[k].global);
      }
      report_.global.push_back(score_parameter(name, get(raw_m.global), reps, codecs));
    };
    global_score("n_tot", [](const GlobalParams& g) { return g.n_tot; });
    global_score(volumetric ? "v_tot" : "a_tot", [](const GlobalParams& g) { return g.a_tot; });
    if (volumetric) global_score("sa_tot", [](const GlobalParams& g) { return g.sa_tot; });

    std::vector<ObjectTable> rep_tables;
    for (const auto& m : rep_m) rep_tables.push_back(m.table);
    for (std::size_t k = 0; k < coded.size(); ++k) {
      const std::string id = c_.codecs[k].to_string();
      if (raw_m.table.values.empty()) {
        report_.notes.push_back("no raw objects: per-object scores skipped for " + id);
        continue;
      }
      report_.objects[id] =
          object_scores(raw_m.table, rep_tables, codec_m[k].table, c_.max_distance, c_.bin_width);
    }

    FeatureRecipe ops = c_.operators;
    const RealImage raw_r = to_real(raw);
    std::vector<RealImage> reps_r;
    for (const auto& r : replicates) reps_r.push_back(to_real(r));
    for (std::size_t k = 0; k < coded.size(); ++k) {
      const std::string id = c_.codecs[k].to_string();
      report_.operators[id]["image"] = operator_scores(raw_r, to_real(coded[k].decoded), reps_r, ops);
      const auto art = artifact_map(raw, coded[k].decoded, model_);
      report_.extra["artifacts"][id] = {
          {"mean", art.mean}, {"stddev", art.stddev}, {"max_abs", art.max_abs}};
      if (scene) report_.extra["snr_loss_db"][id] = snr_loss_db(*scene, raw, coded[k].decoded);
    }
    report_.extra["raw_objects"] = raw_m.global.n_tot;
    return 0;
  });
  if (volumetric) {
    report_.notes.push_back("replicates are drawn per voxel, independently across slices");
  }
  report_.notes.push_back("object centroids are in pixel units with pixel centres at integers");
  report_.notes.push_back("per-object sigma_raw comes from each object's own replicate matches");
}

void Runner::run_opt() {
  const auto& s = c_.opt;
  const auto angles = uniform_angles(s.n_angles, s.span_deg);
  const std::size_t n = s.phantom.size;

  OptPhantom phantom;
  ImageStack raw_proj;
  stage("input", [&] {
    phantom = generate_opt_phantom(s.phantom);
    const RealImage proj = project_volume(phantom.volume, angles);
    double peak = 0;
    for (double v : proj.values()) peak = std::max(peak, v);
    require(peak > 0, ErrorCode::kInvalidSpec, "phantom projects to zero");
    std::vector<std::uint16_t> adu(proj.size());
    for (std::size_t i = 0; i < proj.size(); ++i) {
      const double v = model_.offset + s.projection_peak * proj[i] / peak;
      adu[i] = static_cast<std::uint16_t>(std::clamp(std::nearbyint(v), 0.0, 65535.0));
    }
    raw_proj = acquire(ImageStack(proj.dims(), 16, std::move(adu)), model_, seed_for("acquire"));
    report_.provenance["input"] = {{"kind", "opt"},
                                   {"size", n},
                                   {"slices", s.phantom.slices},
                                   {"plaques", s.phantom.plaques},
                                   {"n_angles", s.n_angles},
                                   {"span", s.span_deg},
                                   {"filter", to_string(s.filter)},
                                   {"crop", s.crop},
                                   {"seed", s.phantom.seed}};
    if (o_.write_artifacts) write_stack(raw_proj, out("projections_raw.tif"));
    return 0;
  });

  auto reconstruct = [&](const ImageStack& proj) {
    RealImage r = to_real(proj);
    for (auto& v : r.storage()) v -= model_.offset;
    return crop_xy(reconstruct_volume(r, ProjectionLayout::kPerAngle, angles, s.filter, n), s.crop);
  };
  const LabelMap class_map = crop_xy(phantom.class_map, s.crop);

  const auto replicates = stage("synth", [&] {
    return generate_raw_equivalents(raw_proj, model_, {c_.n_replicates, seed_for("synth"), true});
  });
  const auto coded = run_codecs(raw_proj);

  struct Recon {
    RealImage volume;
    ImageStack normalized;
  };
  const auto [raw_rec, rep_rec, codec_rec] = stage("reconstruct", [&] {
    auto make = [&](const ImageStack& p) {
      Recon r{reconstruct(p), {}};
      r.normalized = normalize_volume(r.volume);
      return r;
    };
    Recon raw_r = make(raw_proj);
    std::vector<Recon> reps, cod;
    for (const auto& p : replicates) reps.push_back(make(p));
    for (const auto& p : coded) cod.push_back(make(p.decoded));
    if (o_.write_artifacts) {
      write_stack(raw_r.normalized, out("reconstruction_raw.tif"));
      for (std::size_t k = 0; k < cod.size(); ++k) {
        write_stack(cod[k].normalized,
                    out("reconstruction_" + file_id(c_.codecs[k].to_string()) + ".tif"));
      }
    }
    return std::make_tuple(std::move(raw_r), std::move(reps), std::move(cod));
  });

  classifier_ =
      resolve_classifier(raw_rec.normalized, class_map, {"background", "anatomy", "plaque"});

  struct Measured {
    PlaqueParams plaque;
    ObjectTable table;
  };
  auto measure = [&](const ImageStack& vol, const std::string& tag) {
    const auto proba = predict_proba(classifier_, vol);
    const Mask anatomy = threshold_mask(proba, 1, s.anatomy_threshold);
    const Mask plaque_mask = threshold_mask(proba, 2, s.plaque_threshold);
    Mask organ(anatomy.dims());
    for (std::size_t i = 0; i < organ.size(); ++i) organ[i] = anatomy[i] | plaque_mask[i];
    const auto plaques = c_.connectivity == 0 ? label_components(plaque_mask)
                                              : label_components(plaque_mask, c_.connectivity);
    Measured m;
    m.plaque = *global_params(plaques, organ).plaque;
    const auto rec = object_params_3d(plaques, vol.voxel_size());
    m.table = object_table(rec);
    if (o_.write_artifacts && !tag.empty()) {
      write_labels(plaques.labels, out("plaques_" + tag + ".tif"));
      write_objects_csv(rec, out("plaques_" + tag + ".csv"));
    }
    return m;
  };

  const auto [raw_m, rep_m, codec_m] = stage("segment", [&] {
    Measured r = measure(raw_rec.normalized, "raw");
    std::vector<Measured> reps, cod;
    for (const auto& v : rep_rec) reps.push_back(measure(v.normalized, ""));
    for (std::size_t k = 0; k < codec_rec.size(); ++k) {
      cod.push_back(measure(codec_rec[k].normalized, file_id(c_.codecs[k].to_string())));
    }
    return std::make_tuple(std::move(r), std::move(reps), std::move(cod));
  });

  stage("score", [&] {
    auto global_score = [&](const std::string& name, auto get) {
      std::vector<double> reps;
      for (const auto& m : rep_m) reps.push_back(get(m.plaque));
      std::map<std::string, double> codecs;
      for (std::size_t k = 0; k < coded.size(); ++k) {
        codecs[c_.codecs[k].to_string()] = get(codec_m[k].plaque);
      }
      report_.global.push_back(score_parameter(name, get(raw_m.plaque), reps, codecs));
    };
    global_score("plaque_volume", [](const PlaqueParams& p) { return p.total_volume; });
    global_score("plaque_load", [](const PlaqueParams& p) { return p.load; });
    global_score("plaque_count", [](const PlaqueParams& p) { return p.count; });
    global_score("plaque_mean_volume", [](const PlaqueParams& p) { return p.mean_volume; });
    global_score("organ_volume", [](const PlaqueParams& p) { return p.organ_volume; });

    std::vector<ObjectTable> rep_tables;
    for (const auto& m : rep_m) rep_tables.push_back(m.table);
    for (std::size_t k = 0; k < coded.size(); ++k) {
      const std::string id = c_.codecs[k].to_string();
      if (raw_m.table.values.empty()) {
        report_.notes.push_back("no raw plaques: per-object scores skipped for " + id);
        continue;
      }
      report_.objects[id] =
          object_scores(raw_m.table, rep_tables, codec_m[k].table, c_.max_distance, c_.bin_width);
    }

    // Operators on the projections (slice-wise per angle) and after FBP.
    FeatureRecipe proj_ops = c_.operators;
    proj_ops.dimensionality = 2;
    FeatureRecipe rec_ops = c_.operators;
    rec_ops.dimensionality = 3;
    const RealImage raw_p = to_real(raw_proj);
    std::vector<RealImage> reps_p, reps_v;
    for (const auto& r : replicates) reps_p.push_back(to_real(r));
    for (const auto& r : rep_rec) reps_v.push_back(r.volume);
    for (std::size_t k = 0; k < coded.size(); ++k) {
      const std::string id = c_.codecs[k].to_string();
      report_.operators[id]["projections"] =
          operator_scores(raw_p, to_real(coded[k].decoded), reps_p, proj_ops);
      report_.operators[id]["reconstruction"] =
          operator_scores(raw_rec.volume, codec_rec[k].volume, reps_v, rec_ops);
      const auto art = artifact_map(raw_proj, coded[k].decoded, model_);
      report_.extra["artifacts"][id] = {
          {"mean", art.mean}, {"stddev", art.stddev}, {"max_abs", art.max_abs}};
    }
    std::size_t true_plaques = 0;
    for (auto v : class_map.values()) true_plaques += v == 2;
    report_.extra["true_plaque_voxels"] = true_plaques;
    return 0;
  });
  report_.notes.push_back("codecs act on the projections; scoring follows reconstruction");
  report_.notes.push_back("per-object sigma_raw comes from each object's own replicate matches");
  report_.notes.push_back("reconstructions are percentile-normalized to 16 bit before segmentation");
}

PipelineResult Runner::run() {
  if (c_.workers > 0) set_worker_count(c_.workers);
  if (o_.write_artifacts) {
    std::error_code ec;
    fs::create_directories(c_.output_dir, ec);
    require(!ec, ErrorCode::kIoFailure, "cannot create " + c_.output_dir.string());
  }
  report_.scenario = c_.scenario;
  resolve_model();
  if (c_.scenario == "opt") {
    run_opt();
  } else {
    run_planar();
  }
  finish_provenance();
  PipelineResult result;
  result.report_json = stage("report", [&] { return report_to_json(report_); });
  result.report = std::move(report_);
  if (o_.write_artifacts) {
    std::ofstream f(out("report.json"), std::ios::binary);
    f << dump_report(result.report_json);
    require(static_cast<bool>(f), ErrorCode::kIoFailure, "cannot write report.json");
  }
  return result;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  return Runner(config, options).run();
}

}  // namespace rawscore
