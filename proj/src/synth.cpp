#include "rawscore/synth.hpp"

#include <algorithm>
#include <cmath>

#include "rawscore/parallel.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

namespace {

void check_model(const ImageStack& raw, const NoiseModel& model) {
  require(raw.bit_depth() == model.bit_depth, ErrorCode::kModelMismatch,
          "image bit depth " + std::to_string(raw.bit_depth()) +
              " differs from the calibrated bit depth " + std::to_string(model.bit_depth));
  const auto peak = raw.size() ? *std::max_element(raw.data().begin(), raw.data().end()) : 0;
  require(static_cast<double>(peak) <= model.saturation, ErrorCode::kModelMismatch,
          "image maximum " + std::to_string(peak) + " exceeds model saturation " +
              std::to_string(model.saturation));
}

// Streams are (replicate << 8 | attempt) so redraws never collide.
ImageStack draw(const ImageStack& raw, const NoiseModel& model, std::uint64_t seed,
                std::uint64_t replicate, bool clamp) {
  const CounterRng rng(seed);
  const double top = static_cast<double>(raw.max_value());
  std::vector<std::uint16_t> out(raw.size());
  for (std::size_t p = 0; p < raw.size(); ++p) {
    const double d = raw[p];
    const double sigma = sigma_of(model, d);
    double v = std::nearbyint(d + sigma * rng.normal(replicate << 8, p));
    for (std::uint64_t attempt = 1; !clamp && (v < 0 || v > top) && attempt < 64; ++attempt) {
      v = std::nearbyint(d + sigma * rng.normal((replicate << 8) | attempt, p));
    }
    out[p] = static_cast<std::uint16_t>(std::clamp(v, 0.0, top));
  }
  return ImageStack(raw.dims(), raw.bit_depth(), std::move(out), raw.voxel_size());
}

}  // namespace

ImageStack raw_equivalent(const ImageStack& raw, const NoiseModel& model, std::uint64_t seed,
                          std::size_t replicate, bool clamp) {
  check_model(raw, model);
  return draw(raw, model, seed, replicate, clamp);
}

std::vector<ImageStack> generate_raw_equivalents(const ImageStack& raw, const NoiseModel& model,
                                                 const SynthSpec& spec) {
  require(spec.n_replicates >= 2, ErrorCode::kInvalidSpec, "need at least 2 replicates");
  check_model(raw, model);
  std::vector<ImageStack> out(spec.n_replicates);
  parallel_for(out.size(), [&](std::size_t r) { out[r] = draw(raw, model, spec.seed, r, spec.clamp); });
  return out;
}

ImageStack acquire(const ImageStack& scene, const NoiseModel& model, std::uint64_t seed) {
  // A reserved stream keeps acquisitions distinct from replicate streams.
  return draw(scene, model, seed, 0xFFFFFFull, true);
}

PixelStatistics relative_error_map(const std::vector<ImageStack>& replicates) {
  require(replicates.size() >= 2, ErrorCode::kTooFewReplicates,
          "relative error needs at least 2 replicates");
  const Dims dims = replicates.front().dims();
  for (const auto& r : replicates) {
    require(r.dims() == dims, ErrorCode::kDimMismatch, "replicates differ in dims");
  }
  PixelStatistics s{RealImage(dims), RealImage(dims), RealImage(dims)};
  const double n = static_cast<double>(replicates.size());
  for (std::size_t p = 0; p < dims.count(); ++p) {
    double sum = 0;
    for (const auto& r : replicates) sum += r[p];
    const double mu = sum / n;
    double ss = 0;
    for (const auto& r : replicates) ss += (r[p] - mu) * (r[p] - mu);
    const double sd = std::sqrt(ss / (n - 1.0));
    s.mean[p] = mu;
    s.stddev[p] = sd;
    s.relative_error[p] = mu == 0 ? 0.0 : sd / mu;
  }
  return s;
}

}  // namespace rawscore
