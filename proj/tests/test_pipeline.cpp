#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rawscore/pipeline.hpp"

using namespace rawscore;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_2d() {
  return nlohmann::json::parse(R"({
    "version": 1, "scenario": "2d", "seed": 3,
    "phantom": {"kind": "disks2d", "width": 64, "height": 64, "count": 4, "radius": 7,
                "background": 400, "foreground": 2000, "edge_width": 1.5, "seed": 2},
    "model": {"inline": {"mode": "parametric", "K": 2.0, "offset": 100, "read_variance": 9,
                         "saturation": 65535, "bit_depth": 16}},
    "n_replicates": 4,
    "codecs": ["bit8", "noisenorm"],
    "classifier": {"train": {"n_trees": 8, "scribbles_per_class": 60,
                             "recipe": {"sigmas": [1, 2], "kinds": ["raw_intensity", "gaussian", "gradient_magnitude"],
                                        "dimensionality": 2}}},
    "operators": {"sigmas": [1], "kinds": ["gaussian", "laplacian"]}
  })");
}

ErrorCode config_error_code(const nlohmann::json& j, std::string* message = nullptr) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  return ErrorCode::kUnsupportedFormat;  // sentinel: nothing thrown
}

}  // namespace

TEST(Config, DemoAndSmallParse) {
  EXPECT_NO_THROW(parse_config(demo_config()));
  const auto c = parse_config(small_2d());
  EXPECT_EQ(c.scenario, "2d");
  EXPECT_EQ(c.n_replicates, 4u);
  ASSERT_EQ(c.codecs.size(), 2u);
  EXPECT_EQ(c.codecs[1].kind, CodecSpec::Kind::kNoisenorm);
  EXPECT_EQ(c.train.n_trees, 8u);
}

TEST(Config, UnknownKeyIsNamed) {
  auto j = small_2d();
  j["colour"] = "blue";
  std::string msg;
  EXPECT_EQ(config_error_code(j, &msg), ErrorCode::kConfigInvalid);
  EXPECT_NE(msg.find("colour"), std::string::npos);
  j = small_2d();
  j["phantom"]["wobble"] = 1;
  EXPECT_EQ(config_error_code(j, &msg), ErrorCode::kConfigInvalid);
  EXPECT_NE(msg.find("wobble"), std::string::npos);
}

TEST(Config, InvalidValues) {
  auto j = small_2d();
  j["version"] = 2;
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
  j = small_2d();
  j["n_replicates"] = 1;
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
  j = small_2d();
  j["codecs"] = {"bit8", "bit8"};
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
  j = small_2d();
  j["codecs"] = {"gzip"};
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
  j = small_2d();
  j["scenario"] = "4d";
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
}

TEST(Config, MissingModelFile) {
  auto j = small_2d();
  j["model"] = {{"path", "does_not_exist.json"}};
  std::string msg;
  EXPECT_EQ(config_error_code(j, &msg), ErrorCode::kConfigInvalid);
  EXPECT_NE(msg.find("model"), std::string::npos);
}

TEST(Config, CanonicalIgnoresOutputAndWorkers) {
  auto a = small_2d(), b = small_2d();
  a["output_dir"] = "x";
  b["output_dir"] = "y";
  b["workers"] = 3;
  EXPECT_EQ(parse_config(a).canonical, parse_config(b).canonical);
  b["seed"] = 4;
  EXPECT_NE(parse_config(a).canonical, parse_config(b).canonical);
}

TEST(Pipeline, SmallRunIsValidAndDeterministic) {
  const auto c = parse_config(small_2d());
  RunOptions opt;
  opt.write_artifacts = false;
  const auto r1 = run_pipeline(c, opt);
  const auto r2 = run_pipeline(c, opt);
  EXPECT_EQ(r1.report_json, r2.report_json);
  EXPECT_NO_THROW(validate_report(r1.report_json));
  EXPECT_EQ(r1.report.codecs.size(), 2u);
  EXPECT_EQ(r1.report.provenance["seeds"].size(), 6u);
  bool has_a_tot = false;
  for (const auto& p : r1.report.global) has_a_tot |= p.name == "a_tot";
  EXPECT_TRUE(has_a_tot);
  ASSERT_TRUE(r1.report.objects.count("noisenorm"));
}

TEST(Pipeline, WritesArtifacts) {
  const auto dir = fs::temp_directory_path() / "rawscore_pipeline_test";
  fs::remove_all(dir);
  auto j = small_2d();
  j["output_dir"] = dir.string();
  run_pipeline(parse_config(j));
  for (const char* f : {"report.json", "raw.tif", "classifier.json", "noise_model.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "report.json");
  EXPECT_NO_THROW(validate_report(nlohmann::json::parse(in)));
  fs::remove_all(dir);
}

TEST(Pipeline, ThreeDScenario) {
  auto j = nlohmann::json::parse(R"({
    "version": 1, "scenario": "3d", "seed": 1,
    "phantom": {"kind": "spheres3d", "width": 40, "height": 40, "depth": 16, "count": 3, "radius": 4,
                "background": 400, "foreground": 3000, "seed": 4},
    "model": {"inline": {"mode": "parametric", "K": 2.0, "offset": 100, "read_variance": 9,
                         "saturation": 65535, "bit_depth": 16}},
    "n_replicates": 3, "codecs": ["bit8"],
    "classifier": {"train": {"n_trees": 5, "scribbles_per_class": 60,
                             "recipe": {"sigmas": [1], "kinds": ["raw_intensity", "gaussian"], "dimensionality": 3}}},
    "operators": {"sigmas": [1], "kinds": ["gaussian"]}
  })");
  RunOptions opt;
  opt.write_artifacts = false;
  const auto r = run_pipeline(parse_config(j), opt);
  EXPECT_NO_THROW(validate_report(r.report_json));
  bool has_sa = false;
  for (const auto& p : r.report.global) has_sa |= p.name == "sa_tot";
  EXPECT_TRUE(has_sa);
}

TEST(OptPhantom, ClassesAndDeterminism) {
  OptPhantomSpec spec;
  spec.size = 32;
  spec.slices = 8;
  spec.plaques = 5;
  const auto a = generate_opt_phantom(spec), b = generate_opt_phantom(spec);
  EXPECT_EQ(a.volume, b.volume);
  EXPECT_EQ(a.class_map, b.class_map);
  std::size_t counts[3] = {0, 0, 0};
  for (auto v : a.class_map.values()) {
    ASSERT_LT(v, 3u);
    ++counts[v];
  }
  EXPECT_GT(counts[0], 0u);
  EXPECT_GT(counts[1], counts[2]);
  EXPECT_GT(counts[2], 0u);
}

TEST(Segment, ThresholdAndLabel) {
  ProbabilityMap p;
  p.dims = {4, 1, 1};
  p.n_classes = 2;
  p.values = {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7};
  const auto s = segment(p, 1, 0.5);
  EXPECT_EQ(s.mask.storage(), (std::vector<std::uint8_t>{0, 1, 0, 1}));
  EXPECT_EQ(s.objects.count, 2u);
}

TEST(Config, OptCrop) {
  auto j = nlohmann::json::parse(R"({"version": 1, "scenario": "opt", "seed": 1,
    "model": {"inline": {"mode": "parametric", "K": 2.0, "offset": 100, "read_variance": 9}},
    "codecs": ["bit8"], "opt": {"phantom": {"size": 32, "slices": 4, "plaques": 3}, "crop": 4}})");
  EXPECT_EQ(parse_config(j).opt.crop, 4u);
  j["opt"]["crop"] = 16;
  EXPECT_EQ(config_error_code(j), ErrorCode::kConfigInvalid);
}

TEST(Pipeline, OptScenarioWithCrop) {
  auto j = nlohmann::json::parse(R"({"version": 1, "scenario": "opt", "seed": 1,
    "model": {"inline": {"mode": "parametric", "K": 2.0, "offset": 100, "read_variance": 9}},
    "n_replicates": 3, "codecs": ["noisenorm"],
    "classifier": {"train": {"n_trees": 5, "scribbles_per_class": 60}},
    "operators": {"sigmas": [1], "kinds": ["gaussian"]},
    "opt": {"phantom": {"size": 32, "slices": 6, "plaques": 6, "seed": 3}, "n_angles": 32, "crop": 3}})");
  RunOptions opt;
  opt.write_artifacts = false;
  const auto r = run_pipeline(parse_config(j), opt);
  EXPECT_NO_THROW(validate_report(r.report_json));
  EXPECT_EQ(r.report.provenance["input"]["crop"], 3);
  EXPECT_TRUE(r.report.operators.at("noisenorm").count("reconstruction"));
}
