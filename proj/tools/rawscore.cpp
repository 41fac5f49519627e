// rawscore command-line front end.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rawscore/calib.hpp"
#include "rawscore/codec.hpp"
#include "rawscore/imgio.hpp"
#include "rawscore/mlseg.hpp"
#include "rawscore/morph.hpp"
#include "rawscore/parallel.hpp"
#include "rawscore/pipeline.hpp"
#include "rawscore/rng.hpp"
#include "rawscore/score.hpp"
#include "rawscore/synth.hpp"
#include "rawscore/tomo.hpp"

namespace fs = std::filesystem;
using namespace rawscore;

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + p.string());
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kCorruptFile, p.string() + " is not valid JSON");
  return j;
}

ImageStack probability_stack(const RealImage& p) {
  std::vector<std::uint16_t> v(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = static_cast<std::uint16_t>(std::nearbyint(std::clamp(p[i], 0.0, 1.0) * 65535.0));
  }
  return ImageStack(p.dims(), 16, std::move(v));
}

ImageStack mask_stack(const Mask& m) {
  std::vector<std::uint16_t> v(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i] ? 255 : 0;
  return ImageStack(m.dims(), 8, std::move(v));
}

// ---- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string series, out = "noise_model.json", write_series_dir;
  bool simulate = false;
  double k = 2.0, offset = 100.0, read_variance = 9.0;
  std::size_t levels = 20, frames = 200, sensor = 32;
  std::uint64_t seed = 1;
  bool per_pixel_offset = false;
};

int run_calibrate(const CalibrateArgs& a) {
  CalibrationSeries series;
  if (a.simulate) {
    series = simulate_calibration_bench(NoiseModel::parametric(a.k, a.offset, a.read_variance),
                                        Dims{a.sensor, a.sensor, 1}, a.levels, a.frames, a.seed);
    if (!a.write_series_dir.empty()) write_series(series, a.write_series_dir);
  } else {
    require(!a.series.empty(), ErrorCode::kInvalidSpec, "give --series DIR or --simulate");
    series = read_series(a.series);
  }
  FitOptions opts;
  opts.per_pixel_offset = a.per_pixel_offset;
  const NoiseModel m = fit_noise_model(series, opts);
  save_noise_model(m, a.out);
  std::printf("K %.6g\nread_sigma %.6g\noffset %.6g\nsaturation %.6g\nmodel_hash %s\n", m.gain,
              std::sqrt(m.read_variance), m.offset, m.saturation, model_hash(m).c_str());
  return 0;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string input, model, out_dir = ".", phantom_json;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  bool rel_error = false;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  const NoiseModel model = load_noise_model(a.model);
  ImageStack raw;
  if (!a.phantom_json.empty()) {
    const auto ph = generate_phantom(read_json(a.phantom_json).get<PhantomSpec>());
    write_stack(ph.image, fs::path(a.out_dir) / "scene.tif");
    write_labels(ph.truth, fs::path(a.out_dir) / "truth.tif");
    raw = acquire(ph.image, model, derive_seed(a.seed, "acquire"));
    write_stack(raw, fs::path(a.out_dir) / "raw.tif");
  } else {
    require(!a.input.empty(), ErrorCode::kInvalidSpec, "give --input or --phantom");
    raw = read_stack(a.input);
  }
  const auto reps = generate_raw_equivalents(raw, model, {a.n, a.seed, true});
  for (std::size_t r = 0; r < reps.size(); ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "replicate_%03zu.tif", r);
    write_stack(reps[r], fs::path(a.out_dir) / name);
  }
  if (a.rel_error) {
    const auto stats = relative_error_map(reps);
    double mean = 0;
    for (double v : stats.relative_error.values()) mean += v;
    std::printf("mean_relative_error %.6g\n", mean / static_cast<double>(stats.relative_error.size()));
  }
  std::printf("replicates %zu\n", reps.size());
  return 0;
}

// ---- compress ---------------------------------------------------------------

struct CompressArgs {
  std::string input, codec = "noisenorm", model, out, encoded, decode;
  std::uint64_t seed = 0;
};

int run_compress(const CompressArgs& a) {
  std::optional<NoiseModel> model;
  if (!a.model.empty()) model = load_noise_model(a.model);
  if (!a.decode.empty()) {
    require(model.has_value(), ErrorCode::kInvalidSpec, "--decode needs --model");
    const auto stack = noisenorm_decode(read_bytes(a.decode), *model);
    write_stack(stack, a.out);
    return 0;
  }
  const ImageStack raw = read_stack(a.input);
  const CodecSpec spec = CodecSpec::parse(a.codec);
  CodecResult res;
  if (spec.kind == CodecSpec::Kind::kBit8) {
    res = downsample_16_to_8(raw);  // stored at 8 bit
  } else {
    require(spec.kind != CodecSpec::Kind::kNoisenorm || model.has_value(), ErrorCode::kInvalidSpec,
            "noisenorm needs --model");
    res = apply_codec(raw, spec, model ? &*model : nullptr, a.seed);
    if (spec.kind == CodecSpec::Kind::kNoisenorm && !a.encoded.empty()) {
      write_bytes(a.encoded, noisenorm_encode(raw, *model, {spec.q, a.seed}));
    }
  }
  if (!a.out.empty()) write_stack(res.decoded, a.out);
  std::printf("codec %s\nencoded_bytes %zu\ncompression_ratio %.6g\n", res.codec.to_string().c_str(),
              res.encoded_bytes, res.compression_ratio);
  return 0;
}

// ---- train / predict / segment ----------------------------------------------

struct TrainArgs {
  std::string input, labels, recipe, out = "classifier.json", classes;
  std::size_t trees = 100, per_class = 200, min_leaf = 2;
  std::uint64_t seed = 0;
  bool binarize = false;
};

int run_train(const TrainArgs& a) {
  const ImageStack img = read_stack(a.input);
  LabelMap labels = read_labels(a.labels);
  require(labels.dims() == img.dims(), ErrorCode::kDimMismatch, "labels do not match the image");
  if (a.binarize) {
    for (auto& v : labels.storage()) v = v > 0 ? 1 : 0;
  }
  std::uint32_t max_class = 0;
  for (auto v : labels.values()) max_class = std::max(max_class, v);
  std::vector<std::string> names;
  if (!a.classes.empty()) {
    std::stringstream ss(a.classes);
    for (std::string s; std::getline(ss, s, ',');) names.push_back(s);
  } else {
    for (std::uint32_t c = 0; c <= max_class; ++c) names.push_back("class" + std::to_string(c));
  }
  require(names.size() == max_class + 1, ErrorCode::kDegenerateLabels,
          "class names do not cover the label values");
  FeatureRecipe recipe;
  if (!img.dims().is_2d()) recipe.dimensionality = 3;
  if (!a.recipe.empty()) recipe = read_json(a.recipe).get<FeatureRecipe>();
  const auto scribbles = sample_scribbles(labels, names, a.per_class, derive_seed(a.seed, "scribbles"));
  TrainOptions opts;
  opts.n_trees = a.trees;
  opts.min_leaf = a.min_leaf;
  opts.seed = a.seed;
  const auto clf = train_classifier(compute_features(img, recipe), scribbles, recipe, opts);
  save_classifier(clf, a.out);
  std::printf("classes %zu\nfeatures %zu\ntrees %zu\nhash %s\n", clf.classes.size(), clf.n_features,
              clf.trees.size(), clf.hash().c_str());
  return 0;
}

struct PredictArgs {
  std::string input, classifier, out;
  std::size_t cls = 1;
};

int run_predict(const PredictArgs& a) {
  const auto clf = load_classifier(a.classifier);
  const auto proba = predict_proba(clf, read_stack(a.input));
  require(a.cls < proba.n_classes, ErrorCode::kInvalidSpec, "class index out of range");
  write_stack(probability_stack(probability_image(proba, a.cls)), a.out);
  return 0;
}

struct SegmentArgs {
  std::string input, classifier, labels_out, mask_out, csv_out;
  std::size_t cls = 1;
  double threshold = 0.5;
  int connectivity = 0;
};

int run_segment(const SegmentArgs& a) {
  const ImageStack img = read_stack(a.input);
  const auto clf = load_classifier(a.classifier);
  const auto seg = segment(img, clf, a.cls, a.threshold, a.connectivity);
  if (!a.labels_out.empty()) write_labels(seg.objects.labels, a.labels_out);
  if (!a.mask_out.empty()) write_stack(mask_stack(seg.mask), a.mask_out);
  const auto g = global_params(seg.objects);
  if (img.dims().is_2d()) {
    if (!a.csv_out.empty()) write_objects_csv(object_params_2d(seg.objects), a.csv_out);
    std::printf("objects %zu\narea %.10g\n", seg.objects.count, g.a_tot);
  } else {
    if (!a.csv_out.empty()) {
      write_objects_csv(object_params_3d(seg.objects, img.voxel_size()), a.csv_out);
    }
    std::printf("objects %zu\nvolume %.10g\nsurface_faces %.10g\n", seg.objects.count, g.a_tot,
                g.sa_tot);
  }
  return 0;
}

// ---- score ------------------------------------------------------------------

struct ScoreArgs {
  std::string config, out_dir;
  bool demo = false, quiet = false;
};

int run_score(const ScoreArgs& a, int workers, bool verbose) {
  PipelineConfig cfg;
  if (a.demo) {
    cfg = parse_config(demo_config());
  } else {
    require(!a.config.empty(), ErrorCode::kConfigInvalid, "give --config FILE or --demo");
    cfg = load_config(a.config);
  }
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
  if (workers > 0) cfg.workers = workers;
  const auto res = run_pipeline(cfg, {true, verbose});
  if (!a.quiet) {
    for (const auto& p : res.report.global) {
      for (const auto& [codec, s] : p.codecs) {
        std::printf("%-20s %-16s eps=%s %s\n", p.name.c_str(), codec.c_str(),
                    s.epsilon ? std::to_string(*s.epsilon).c_str() : "null",
                    std::string(to_string(s.verdict)).c_str());
      }
    }
  }
  std::printf("report %s\n", (cfg.output_dir / "report.json").string().c_str());
  return 0;
}

// ---- tomo -------------------------------------------------------------------

struct TomoArgs {
  std::string demo, input, sinogram, out, sinogram_out, filter = "hann", layout = "per-angle";
  std::size_t size = 256, angles = 180, out_size = 0;
  double span = 180;
  bool project = false;
};

int run_tomo(const TomoArgs& a) {
  const RampFilter filter = ramp_filter_from_string(a.filter);
  const auto angles = uniform_angles(a.angles, a.span);
  if (!a.demo.empty()) {
    require(a.demo == "shepp-logan", ErrorCode::kInvalidSpec, "unknown demo '" + a.demo + "'");
    PhantomSpec spec;
    spec.kind = PhantomKind::kSheppLogan2d;
    spec.width = spec.height = a.size;
    const RealImage truth = to_real(generate_phantom(spec).image);
    const Sinogram sino = forward_radon(truth, angles);
    const RealImage rec = fbp_reconstruct(sino, filter, a.size);
    // Error inside the inscribed circle, relative to the truth range there.
    const double c = (static_cast<double>(a.size) - 1) / 2, r2 = std::pow(a.size / 2.0, 2);
    double se = 0, lo = 1e300, hi = -1e300;
    std::size_t n = 0;
    for (std::size_t y = 0; y < a.size; ++y) {
      for (std::size_t x = 0; x < a.size; ++x) {
        if ((x - c) * (x - c) + (y - c) * (y - c) > r2) continue;
        const double t = truth.at(x, y);
        se += (rec.at(x, y) - t) * (rec.at(x, y) - t);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
        ++n;
      }
    }
    std::printf("nrmse %.6g\n", std::sqrt(se / static_cast<double>(n)) / (hi - lo));
    if (!a.sinogram_out.empty()) save_sinogram(sino, a.sinogram_out);
    if (!a.out.empty()) write_stack(normalize_volume(rec), a.out);
    return 0;
  }
  if (!a.sinogram.empty()) {
    const Sinogram sino = load_sinogram(a.sinogram);
    const std::size_t n = a.out_size ? a.out_size : sino.n_det;
    write_stack(normalize_volume(fbp_reconstruct(sino, filter, n)), a.out);
    return 0;
  }
  require(!a.input.empty(), ErrorCode::kInvalidSpec, "give --demo, --sinogram or --input");
  const RealImage input = to_real(read_stack(a.input));
  if (a.project) {
    const RealImage proj = project_volume(input, angles);
    write_stack(normalize_volume(proj, 0.0, 100.0), a.out);
    return 0;
  }
  const auto layout = a.layout == "per-slice" ? ProjectionLayout::kPerSlice
                                              : ProjectionLayout::kPerAngle;
  require(a.layout == "per-slice" || a.layout == "per-angle", ErrorCode::kInvalidSpec,
          "layout is per-angle or per-slice");
  const std::size_t n_angles = layout == ProjectionLayout::kPerAngle ? input.dims().depth
                                                                     : input.dims().height;
  const auto proj_angles = uniform_angles(n_angles, a.span);
  const std::size_t n = a.out_size ? a.out_size : input.dims().width;
  write_stack(normalize_volume(reconstruct_volume(input, layout, proj_angles, filter, n)), a.out);
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::string input;
  bool schema = false;
};

int run_report(const ReportArgs& a) {
  if (a.schema) {
    std::cout << report_schema().dump(2) << "\n";
    return 0;
  }
  const auto j = read_json(a.input);
  validate_report(j);
  std::printf("scenario %s\n", j["scenario"].get<std::string>().c_str());
  for (const auto& c : j["codecs"]) {
    std::printf("codec %-16s ratio %.4g\n", c["id"].get<std::string>().c_str(),
                c["compression_ratio"].get<double>());
  }
  for (const auto& p : j["global"]) {
    for (const auto& [codec, s] : p["codecs"].items()) {
      const std::string eps = s["epsilon"].is_null() ? "null" : std::to_string(s["epsilon"].get<double>());
      std::printf("%-20s %-16s eps=%s %s\n", p["parameter"].get<std::string>().c_str(), codec.c_str(),
                  eps.c_str(), s["verdict"].get<std::string>().c_str());
    }
  }
  for (const auto& [codec, o] : j["objects"].items()) {
    for (const auto& p : o["parameters"]) {
      std::printf("object %-16s %-14s mean_eps=%.4g std=%.4g %s\n", codec.c_str(),
                  p["parameter"].get<std::string>().c_str(), p["mean_epsilon"].get<double>(),
                  p["std_epsilon"].get<double>(), p["verdict"].get<std::string>().c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rawscore: noise-referenced tolerance scoring for lossy image reduction"};
  app.require_subcommand(1);
  int workers = 0;
  bool verbose = false;
  app.add_option("--workers", workers, "worker threads (results do not depend on it)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", verbose, "stage progress on stderr");

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "fit a photon-transfer noise model");
  cal->add_option("--series", ca.series, "calibration series directory");
  cal->add_flag("--simulate", ca.simulate, "simulate a bench instead of reading one");
  cal->add_option("--K", ca.k, "simulated gain");
  cal->add_option("--offset", ca.offset, "simulated dark level");
  cal->add_option("--read-variance", ca.read_variance, "simulated read variance");
  cal->add_option("--levels", ca.levels);
  cal->add_option("--frames", ca.frames);
  cal->add_option("--sensor", ca.sensor, "simulated sensor edge in pixels");
  cal->add_option("--seed", ca.seed);
  cal->add_option("--write-series", ca.write_series_dir, "save the simulated series");
  cal->add_flag("--per-pixel-offset", ca.per_pixel_offset);
  cal->add_option("-o,--out", ca.out, "noise model JSON");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "draw raw-equivalent replicates");
  syn->add_option("-i,--input", sa.input, "raw image");
  syn->add_option("--phantom", sa.phantom_json, "phantom spec JSON; acquires a raw image first");
  syn->add_option("-m,--model", sa.model, "noise model JSON")->required();
  syn->add_option("-n,--replicates", sa.n)->check(CLI::Range(1, 10000));
  syn->add_option("--seed", sa.seed);
  syn->add_option("-o,--out-dir", sa.out_dir);
  syn->add_flag("--relative-error", sa.rel_error, "print the mean per-pixel relative error");

  CompressArgs co;
  auto* cmp = app.add_subcommand("compress", "apply a data-reduction codec");
  cmp->add_option("-i,--input", co.input, "16-bit image");
  cmp->add_option("-c,--codec", co.codec, "identity|bit8|jpeg:Q|jpeg-ratio:R|noisenorm[:q]");
  cmp->add_option("-m,--model", co.model, "noise model JSON (noisenorm)");
  cmp->add_option("--seed", co.seed, "dither seed");
  cmp->add_option("-o,--out", co.out, "decoded image");
  cmp->add_option("--encoded", co.encoded, "write the noisenorm container");
  cmp->add_option("--decode", co.decode, "decode a noisenorm container to --out");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train a pixel classifier from a label map");
  trn->add_option("-i,--input", ta.input)->required();
  trn->add_option("-l,--labels", ta.labels, "dense class map (32-bit labels TIFF)")->required();
  trn->add_option("--recipe", ta.recipe, "feature recipe JSON");
  trn->add_option("--classes", ta.classes, "comma-separated class names");
  trn->add_flag("--binarize", ta.binarize, "treat any non-zero label as class 1");
  trn->add_option("--trees", ta.trees);
  trn->add_option("--min-leaf", ta.min_leaf);
  trn->add_option("--scribbles", ta.per_class, "scribble pixels per class");
  trn->add_option("--seed", ta.seed);
  trn->add_option("-o,--out", ta.out);

  PredictArgs pa;
  auto* prd = app.add_subcommand("predict", "class probability map");
  prd->add_option("-i,--input", pa.input)->required();
  prd->add_option("--classifier", pa.classifier)->required();
  prd->add_option("--class", pa.cls);
  prd->add_option("-o,--out", pa.out, "probability TIFF scaled to 16 bit")->required();

  SegmentArgs sg;
  auto* seg = app.add_subcommand("segment", "threshold, label and measure objects");
  seg->add_option("-i,--input", sg.input)->required();
  seg->add_option("--classifier", sg.classifier)->required();
  seg->add_option("--class", sg.cls);
  seg->add_option("--threshold", sg.threshold)->check(CLI::Range(0.0, 1.0));
  seg->add_option("--connectivity", sg.connectivity)->check(CLI::IsMember({0, 4, 6, 8, 26}));
  seg->add_option("--labels-out", sg.labels_out);
  seg->add_option("--mask-out", sg.mask_out);
  seg->add_option("--csv", sg.csv_out);

  ScoreArgs sc;
  auto* scr = app.add_subcommand("score", "run the full pipeline and write a tolerance report");
  scr->add_option("-c,--config", sc.config, "pipeline config JSON");
  scr->add_flag("--demo", sc.demo, "use the bundled demo config");
  scr->add_option("-o,--out-dir", sc.out_dir, "override output_dir");
  scr->add_flag("-q,--quiet", sc.quiet);

  TomoArgs to;
  auto* tom = app.add_subcommand("tomo", "parallel-beam projection and reconstruction");
  tom->add_option("--demo", to.demo, "shepp-logan");
  tom->add_option("-i,--input", to.input, "projections (or a volume with --project)");
  tom->add_option("--sinogram", to.sinogram, "sinogram TIFF with JSON sidecar");
  tom->add_flag("--project", to.project, "forward-project --input");
  tom->add_option("--layout", to.layout, "per-angle|per-slice");
  tom->add_option("--size", to.size, "demo phantom size");
  tom->add_option("--angles", to.angles);
  tom->add_option("--span", to.span, "angular span in degrees");
  tom->add_option("--filter", to.filter, "ramp|hann");
  tom->add_option("--out-size", to.out_size);
  tom->add_option("--sinogram-out", to.sinogram_out);
  tom->add_option("-o,--out", to.out);

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "validate and summarize a tolerance report");
  rep->add_option("-i,--input", ra.input);
  rep->add_flag("--schema", ra.schema, "print the report JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (workers > 0) set_worker_count(workers);
    if (*cal) return run_calibrate(ca);
    if (*syn) return run_synth(sa);
    if (*cmp) return run_compress(co);
    if (*trn) return run_train(ta);
    if (*prd) return run_predict(pa);
    if (*seg) return run_segment(sg);
    if (*scr) return run_score(sc, workers, verbose);
    if (*tom) return run_tomo(to);
    if (*rep) return run_report(ra);
  } catch (const Error& e) {
    std::cerr << "rawscore: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "rawscore: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
