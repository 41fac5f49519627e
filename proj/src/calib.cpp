#include "rawscore/calib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "rawscore/imgio.hpp"
#include "rawscore/parallel.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

NoiseModel NoiseModel::parametric(double gain, double offset, double read_variance,
                                  double saturation, int bit_depth) {
  NoiseModel m;
  m.mode = Mode::kParametric;
  m.gain = gain;
  m.offset = offset;
  m.read_variance = read_variance;
  m.saturation = saturation;
  m.bit_depth = bit_depth;
  return m;
}

double sigma_of(const NoiseModel& model, double d) {
  if (model.mode == NoiseModel::Mode::kParametric || model.empirical_curve.empty()) {
    return std::sqrt(model.read_variance + model.gain * std::max(0.0, d - model.offset));
  }
  const auto& c = model.empirical_curve;
  if (d <= c.front().first) return c.front().second;
  if (d >= c.back().first) return c.back().second;
  const auto hi = std::upper_bound(c.begin(), c.end(), d,
                                   [](double v, const auto& knot) { return v < knot.first; });
  const auto lo = hi - 1;
  const double t = (d - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

void validate(const NoiseModel& m) {
  require(m.bit_depth == 8 || m.bit_depth == 16, ErrorCode::kInvalidSpec,
          "noise model bit depth must be 8 or 16");
  require(m.gain > 0, ErrorCode::kInvalidSpec, "noise model gain must be positive");
  require(m.read_variance >= 0, ErrorCode::kInvalidSpec, "read variance must be non-negative");
  require(m.offset >= 0, ErrorCode::kInvalidSpec, "offset must be non-negative");
  require(m.saturation <= std::ldexp(1.0, m.bit_depth) - 1 && m.saturation > m.offset,
          ErrorCode::kInvalidSpec, "saturation must lie in (offset, 2^bit_depth - 1]");
  for (std::size_t i = 1; i < m.empirical_curve.size(); ++i) {
    require(m.empirical_curve[i].first > m.empirical_curve[i - 1].first, ErrorCode::kInvalidSpec,
            "empirical curve must be strictly increasing in d");
  }
  if (m.mode == NoiseModel::Mode::kEmpirical) {
    require(!m.empirical_curve.empty(), ErrorCode::kInvalidSpec,
            "empirical mode needs at least one knot");
    for (const auto& [d, s] : m.empirical_curve) {
      require(s > 0, ErrorCode::kInvalidSpec, "empirical sigma must be positive");
    }
  } else {
    require(sigma_of(m, m.offset) > 0, ErrorCode::kInvalidSpec,
            "sigma must be positive at the dark level (read variance 0)");
  }
}

void to_json(nlohmann::json& j, const NoiseModel& m) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [d, s] : m.empirical_curve) curve.push_back({d, s});
  j = {{"mode", m.mode == NoiseModel::Mode::kParametric ? "parametric" : "empirical"},
       {"K", m.gain},
       {"offset", m.offset},
       {"read_variance", m.read_variance},
       {"saturation", m.saturation},
       {"bit_depth", m.bit_depth},
       {"empirical_curve", curve}};
  if (!m.offset_map.empty()) j["offset_map"] = m.offset_map;
}

void from_json(const nlohmann::json& j, NoiseModel& m) {
  try {
    m = NoiseModel{};
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "parametric") {
      m.mode = NoiseModel::Mode::kParametric;
    } else if (mode == "empirical") {
      m.mode = NoiseModel::Mode::kEmpirical;
    } else {
      fail(ErrorCode::kInvalidSpec, "unknown noise model mode '" + mode + "'");
    }
    j.at("K").get_to(m.gain);
    j.at("offset").get_to(m.offset);
    j.at("read_variance").get_to(m.read_variance);
    if (j.contains("bit_depth")) j.at("bit_depth").get_to(m.bit_depth);
    m.saturation = std::ldexp(1.0, m.bit_depth) - 1.0;
    if (j.contains("saturation")) j.at("saturation").get_to(m.saturation);
    if (j.contains("empirical_curve")) {
      for (const auto& knot : j.at("empirical_curve")) {
        m.empirical_curve.emplace_back(knot.at(0).get<double>(), knot.at(1).get<double>());
      }
    }
    if (j.contains("offset_map")) j.at("offset_map").get_to(m.offset_map);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidSpec, std::string("noise model: ") + e.what());
  }
}

NoiseModel load_noise_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open noise model " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kCorruptFile, "noise model is not valid JSON");
  NoiseModel m = j.get<NoiseModel>();
  validate(m);
  return m;
}

void save_noise_model(const NoiseModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << nlohmann::json(model).dump(2) << '\n';
}

std::string model_hash(const NoiseModel& model) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(nlohmann::json(model).dump())));
  return buf;
}

CalibrationSeries simulate_calibration_bench(const NoiseModel& truth, Dims dims,
                                             std::size_t n_levels, std::size_t n_frames,
                                             std::uint64_t seed) {
  require(n_levels >= 8, ErrorCode::kInvalidSpec, "bench needs at least 8 illumination levels");
  require(n_frames >= 2, ErrorCode::kInvalidSpec, "bench needs at least 2 frames per level");
  require(dims.count() > 0, ErrorCode::kInvalidSpec, "sensor dims must be positive");
  const double clip = std::min(truth.saturation, std::ldexp(1.0, truth.bit_depth) - 1.0);
  const CounterRng rng(seed);

  CalibrationSeries series;
  series.levels.resize(n_levels);
  for (std::size_t k = 0; k < n_levels; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(n_levels - 1);
    const double mean = truth.offset + (truth.saturation - truth.offset) * frac * frac;
    const double sigma = sigma_of(truth, mean);
    auto& level = series.levels[k];
    level.photons = (mean - truth.offset) / truth.gain;
    level.frames.resize(n_frames);
    parallel_for(n_frames, [&](std::size_t f) {
      std::vector<std::uint16_t> data(dims.count());
      const std::uint64_t stream = (static_cast<std::uint64_t>(k) << 32) | f;
      for (std::size_t p = 0; p < data.size(); ++p) {
        const double v = std::nearbyint(mean + sigma * rng.normal(stream, p));
        data[p] = static_cast<std::uint16_t>(std::clamp(v, 0.0, clip));
      }
      level.frames[f] = ImageStack(dims, truth.bit_depth, std::move(data));
    });
  }
  return series;
}

LevelStats level_stats(const CalibrationLevel& level) {
  require(level.frames.size() >= 2, ErrorCode::kInsufficientLevels,
          "each level needs at least 2 frames for a temporal variance");
  const Dims dims = level.frames.front().dims();
  for (const auto& f : level.frames) {
    require(f.dims() == dims, ErrorCode::kDimMismatch, "calibration frames differ in dims");
  }
  const std::size_t n = level.frames.size();
  const std::size_t pixels = dims.count();
  // Per-pixel temporal moments; sums are exact in double for 16-bit data.
  std::vector<double> sum(pixels, 0.0), sum_sq(pixels, 0.0);
  for (const auto& f : level.frames) {
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = f[p];
      sum[p] += v;
      sum_sq[p] += v * v;
    }
  }
  double mean_acc = 0, var_acc = 0;
  const double nd = static_cast<double>(n);
  for (std::size_t p = 0; p < pixels; ++p) {
    const double mu = sum[p] / nd;
    mean_acc += mu;
    var_acc += std::max(0.0, (sum_sq[p] - nd * mu * mu) / (nd - 1.0));
  }
  LevelStats s;
  s.photons = level.photons;
  s.mean = mean_acc / static_cast<double>(pixels);
  s.variance = var_acc / static_cast<double>(pixels);
  s.dof = static_cast<double>(pixels) * (nd - 1.0);
  return s;
}

namespace {

struct LineFit {
  double intercept = 0;  // sigma_read^2
  double slope = 0;      // K
};

LineFit weighted_fit(std::span<const LevelStats> s, double d0) {
  // Var(v_hat) ~ 2 v^2 / dof; weights are its inverse.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& l : s) {
    const double v = std::max(l.variance, 1.0 / 12.0);
    const double w = l.dof / (2.0 * v * v);
    const double x = l.mean - d0;
    sw += w;
    sx += w * x;
    sy += w * l.variance;
    sxx += w * x * x;
    sxy += w * x * l.variance;
  }
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 0)) fail(ErrorCode::kInsufficientLevels, "levels do not span a line");
  LineFit f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / sw;
  return f;
}

std::size_t distinct_photon_levels(std::span<const LevelStats> s) {
  std::vector<double> p;
  for (const auto& l : s) p.push_back(l.photons);
  std::sort(p.begin(), p.end());
  return static_cast<std::size_t>(std::unique(p.begin(), p.end()) - p.begin());
}

// Pool-adjacent-violators: the closest non-decreasing sequence in L2.
void make_monotone(std::vector<std::pair<double, double>>& curve) {
  struct Block {
    double sum;
    std::size_t n;
  };
  std::vector<Block> blocks;
  for (const auto& [d, s] : curve) {
    blocks.push_back({s, 1});
    while (blocks.size() > 1 &&
           blocks[blocks.size() - 2].sum / static_cast<double>(blocks[blocks.size() - 2].n) >
               blocks.back().sum / static_cast<double>(blocks.back().n)) {
      blocks[blocks.size() - 2].sum += blocks.back().sum;
      blocks[blocks.size() - 2].n += blocks.back().n;
      blocks.pop_back();
    }
  }
  std::size_t i = 0;
  for (const auto& b : blocks) {
    for (std::size_t k = 0; k < b.n; ++k) curve[i++].second = b.sum / static_cast<double>(b.n);
  }
}

}  // namespace

NoiseModel fit_photon_transfer(std::span<const LevelStats> input, int bit_depth,
                               const FitOptions& options) {
  std::vector<LevelStats> s(input.begin(), input.end());
  std::sort(s.begin(), s.end(), [](const LevelStats& a, const LevelStats& b) {
    return a.mean < b.mean || (a.mean == b.mean && a.photons < b.photons);
  });
  if (distinct_photon_levels(s) < options.min_levels) {
    fail(ErrorCode::kInsufficientLevels,
         "need at least " + std::to_string(options.min_levels) + " distinct illumination levels");
  }

  const double min_photons =
      std::min_element(s.begin(), s.end(), [](const auto& a, const auto& b) {
        return a.photons < b.photons;
      })->photons;
  double d0_sum = 0;
  int d0_n = 0;
  for (const auto& l : s) {
    if (l.photons == min_photons) {
      d0_sum += l.mean;
      ++d0_n;
    }
  }
  const double d0 = d0_sum / d0_n;

  // Seed the turnover search with the lower half of the ladder, then iterate
  // until the linear region stops changing.
  std::size_t linear_end = std::max<std::size_t>(3, s.size() / 2);
  std::size_t turnover = s.size();
  LineFit fit;
  for (int iter = 0; iter < 8; ++iter) {
    fit = weighted_fit(std::span(s).first(linear_end), d0);
    std::size_t next = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].photons == min_photons) continue;
      const double predicted = fit.intercept + fit.slope * (s[i].mean - d0);
      if (s[i].variance < options.turnover_fraction * predicted) {
        next = i;
        break;
      }
    }
    turnover = next;
    const std::size_t next_end = std::max<std::size_t>(turnover, 3);
    if (next_end == linear_end) break;
    linear_end = next_end;
  }
  const auto linear = std::span(s).first(std::min(turnover, s.size()));
  if (distinct_photon_levels(linear) < options.min_levels) {
    fail(ErrorCode::kInsufficientLevels, "fewer than " + std::to_string(options.min_levels) +
                                             " usable levels below saturation");
  }
  fit = weighted_fit(linear, d0);
  if (!(fit.slope > 0)) {
    fail(ErrorCode::kNonPhysicalFit, "fitted gain K = " + std::to_string(fit.slope) + " <= 0");
  }
  if (fit.intercept < 0) {
    fail(ErrorCode::kNonPhysicalFit,
         "fitted read variance " + std::to_string(fit.intercept) + " < 0");
  }

  NoiseModel m;
  m.mode = NoiseModel::Mode::kParametric;
  m.bit_depth = bit_depth;
  m.gain = fit.slope;
  m.offset = d0;
  m.read_variance = fit.intercept;
  const double top = std::ldexp(1.0, bit_depth) - 1.0;
  m.saturation = turnover < s.size() ? std::min(s[turnover].mean, top) : top;

  std::map<double, std::pair<double, int>> merged;
  for (const auto& l : linear) {
    auto& e = merged[l.mean];
    e.first += std::sqrt(std::max(l.variance, 0.0));
    e.second += 1;
  }
  for (const auto& [d, e] : merged) m.empirical_curve.emplace_back(d, e.first / e.second);
  make_monotone(m.empirical_curve);
  return m;
}

NoiseModel fit_noise_model(const CalibrationSeries& series, const FitOptions& options) {
  if (series.levels.empty()) fail(ErrorCode::kInsufficientLevels, "empty calibration series");
  const auto& ref = series.levels.front().frames;
  require(!ref.empty(), ErrorCode::kInsufficientLevels, "calibration level without frames");
  const Dims dims = ref.front().dims();
  const int bits = ref.front().bit_depth();
  for (const auto& l : series.levels) {
    for (const auto& f : l.frames) {
      require(f.dims() == dims && f.bit_depth() == bits, ErrorCode::kDimMismatch,
              "calibration images differ in dims or bit depth");
    }
  }
  std::vector<LevelStats> stats(series.levels.size());
  parallel_for(stats.size(), [&](std::size_t i) { stats[i] = level_stats(series.levels[i]); });
  NoiseModel m = fit_photon_transfer(stats, bits, options);

  if (options.per_pixel_offset) {
    const auto dark = std::min_element(series.levels.begin(), series.levels.end(),
                                       [](const auto& a, const auto& b) {
                                         return a.photons < b.photons;
                                       });
    m.offset_map.assign(dims.count(), 0.0);
    for (const auto& f : dark->frames) {
      for (std::size_t p = 0; p < dims.count(); ++p) m.offset_map[p] += f[p];
    }
    for (auto& v : m.offset_map) v /= static_cast<double>(dark->frames.size());
  }
  return m;
}

void write_series(const CalibrationSeries& series, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"levels", nlohmann::json::array()}};
  for (std::size_t k = 0; k < series.levels.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "level_%03zu.tif", k);
    const auto& frames = series.levels[k].frames;
    write_stack(stack_slices(frames), dir / name);
    index["levels"].push_back({{"photons", series.levels[k].photons}, {"file", name}});
  }
  std::ofstream out(dir / "levels.json");
  if (!out) fail(ErrorCode::kIoFailure, "cannot write levels.json in " + dir.string());
  out << index.dump(2) << '\n';
}

CalibrationSeries read_series(const std::filesystem::path& dir) {
  std::ifstream in(dir / "levels.json");
  if (!in) fail(ErrorCode::kIoFailure, "missing levels.json in " + dir.string());
  const auto index = nlohmann::json::parse(in, nullptr, false);
  if (index.is_discarded() || !index.contains("levels")) {
    fail(ErrorCode::kCorruptFile, "levels.json is malformed");
  }
  CalibrationSeries series;
  for (const auto& entry : index["levels"]) {
    CalibrationLevel level;
    level.photons = entry.at("photons").get<double>();
    const auto stack = read_stack(dir / entry.at("file").get<std::string>());
    for (std::size_t z = 0; z < stack.dims().depth; ++z) level.frames.push_back(stack.slice(z));
    series.levels.push_back(std::move(level));
  }
  return series;
}

}  // namespace rawscore
