#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rawscore/calib.hpp"
#include "rawscore/imgio.hpp"

using namespace rawscore;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "rawscore_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + RAWSCORE_CLI + "\" " + args + " >\"" +
                          (work_dir() / "stdout.txt").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string output() {
  std::ifstream in(work_dir() / "stdout.txt");
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string p(const char* name) { return "\"" + (work_dir() / name).string() + "\""; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("--no-such-flag"), 2);
  EXPECT_EQ(run("segment"), 2);  // required options missing
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, MissingInputIsIoFailure) {
  EXPECT_EQ(run("compress -i " + p("nope.tif") + " -c bit8 -o " + p("x.tif")), 12) << output();
}

TEST(Cli, CalibrateSimulated) {
  ASSERT_EQ(run("calibrate --simulate --levels 10 --frames 30 --sensor 16 --seed 2 -o " + p("model.json")), 0)
      << output();
  const auto m = load_noise_model(work_dir() / "model.json");
  EXPECT_NEAR(m.gain, 2.0, 0.2);
  EXPECT_NE(output().find("model_hash"), std::string::npos);
}

TEST(Cli, CompressBit8WritesEightBit) {
  std::vector<std::uint16_t> v(32 * 32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(i * 61);
  write_stack(ImageStack({32, 32, 1}, 16, v), work_dir() / "in.tif");
  ASSERT_EQ(run("compress -i " + p("in.tif") + " -c bit8 -o " + p("out8.tif")), 0) << output();
  const auto out = read_stack(work_dir() / "out8.tif");
  EXPECT_EQ(out.bit_depth(), 8);
  EXPECT_EQ(out.at(1, 0), static_cast<std::uint16_t>(std::lround(61 * 255.0 / 65535.0)));
  EXPECT_NE(output().find("compression_ratio"), std::string::npos);
}

TEST(Cli, NoisenormContainerRoundTrip) {
  save_noise_model(NoiseModel::parametric(2.0, 100.0, 9.0), work_dir() / "nn_model.json");
  std::vector<std::uint16_t> v(40 * 24);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(200 + (i * 37) % 3000);
  write_stack(ImageStack({40, 24, 1}, 16, v), work_dir() / "nn_in.tif");
  ASSERT_EQ(run("compress -i " + p("nn_in.tif") + " -c noisenorm -m " + p("nn_model.json") +
                " --encoded " + p("c.nnc") + " -o " + p("nn_dec.tif")),
            0)
      << output();
  ASSERT_EQ(run("compress --decode " + p("c.nnc") + " -m " + p("nn_model.json") + " -o " +
                p("nn_dec2.tif")),
            0)
      << output();
  EXPECT_EQ(read_stack(work_dir() / "nn_dec.tif").data().size(), v.size());
  EXPECT_TRUE(std::ranges::equal(read_stack(work_dir() / "nn_dec.tif").data(),
                                 read_stack(work_dir() / "nn_dec2.tif").data()));
  save_noise_model(NoiseModel::parametric(3.0, 100.0, 9.0), work_dir() / "other.json");
  EXPECT_EQ(run("compress --decode " + p("c.nnc") + " -m " + p("other.json") + " -o " + p("bad.tif")), 16);
}

TEST(Cli, TomoDemo) {
  ASSERT_EQ(run("tomo --demo shepp-logan --size 64 --angles 60 -o " + p("rec.tif")), 0) << output();
  EXPECT_NE(output().find("nrmse"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_dir() / "rec.tif"));
}

TEST(Cli, ScoreAndReport) {
  const auto cfg = work_dir() / "cfg.json";
  std::ofstream(cfg) << R"({
    "version": 1, "scenario": "2d", "seed": 3, "output_dir": "score_out",
    "phantom": {"kind": "disks2d", "width": 48, "height": 48, "count": 3, "radius": 6,
                "background": 400, "foreground": 2000, "seed": 2},
    "model": {"inline": {"mode": "parametric", "K": 2.0, "offset": 100, "read_variance": 9,
                         "saturation": 65535, "bit_depth": 16}},
    "n_replicates": 3, "codecs": ["bit8"],
    "classifier": {"train": {"n_trees": 5, "scribbles_per_class": 40,
                             "recipe": {"sigmas": [1], "kinds": ["raw_intensity", "gaussian"], "dimensionality": 2}}},
    "operators": {"sigmas": [1], "kinds": ["gaussian"]}
  })";
  ASSERT_EQ(run("score -q -c \"" + cfg.string() + "\""), 0) << output();
  const auto report = work_dir() / "score_out" / "report.json";
  ASSERT_TRUE(fs::exists(report));
  EXPECT_EQ(run("report -i \"" + report.string() + "\""), 0) << output();

  std::ifstream in(report);
  auto j = nlohmann::json::parse(in);
  j["format"] = 7;
  std::ofstream(work_dir() / "broken.json") << j.dump();
  EXPECT_EQ(run("report -i " + p("broken.json")), 26) << output();

  std::ofstream(work_dir() / "bad_cfg.json") << R"({"version": 1, "sceanrio": "2d"})";
  EXPECT_EQ(run("score -c " + p("bad_cfg.json")), 34) << output();
  EXPECT_NE(output().find("sceanrio"), std::string::npos);
}
