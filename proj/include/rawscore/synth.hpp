#pragma once

#include <cstdint>
#include <vector>

#include "rawscore/calib.hpp"
#include "rawscore/image.hpp"

namespace rawscore {

struct SynthSpec {
  std::size_t n_replicates = 10;
  std::uint64_t seed = 0;
  // When false, out-of-range draws are redrawn (truncated normal) instead of
  // clipped.
  bool clamp = true;
};

// Replicate r is a pure function of (seed, r, flat pixel index): each pixel d
// is replaced by a draw from Normal(d, sigma_of(model, d)), rounded half to
// even and kept inside the bit-depth range.
std::vector<ImageStack> generate_raw_equivalents(const ImageStack& raw, const NoiseModel& model,
                                                 const SynthSpec& spec);

// One replicate, for callers that stream rather than hold the full set.
ImageStack raw_equivalent(const ImageStack& raw, const NoiseModel& model, std::uint64_t seed,
                          std::size_t replicate, bool clamp = true);

// Noisy acquisition of a noiseless scene; identical law to the replicates.
ImageStack acquire(const ImageStack& scene, const NoiseModel& model, std::uint64_t seed);

struct PixelStatistics {
  RealImage mean;
  RealImage stddev;          // n - 1 denominator
  RealImage relative_error;  // stddev / mean, 0 where mean == 0
};

PixelStatistics relative_error_map(const std::vector<ImageStack>& replicates);

}  // namespace rawscore
