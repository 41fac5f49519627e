#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace rawscore {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every output
// block is a pure function of (key, counter), so any sample can be produced
// independently of scheduling order.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Sub-seed for a named stage: stable across runs and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

// Keyed random field: samples addressed by (stream, index).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  std::array<std::uint32_t, 4> block(std::uint64_t stream, std::uint64_t index) const {
    return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                       static_cast<std::uint32_t>(stream),
                       static_cast<std::uint32_t>(stream >> 32)},
                      key_);
  }

  // Uniform in (0, 1), 53-bit resolution.
  double uniform(std::uint64_t stream, std::uint64_t index) const;
  // Standard normal by Box-Muller on one block.
  double normal(std::uint64_t stream, std::uint64_t index) const;

 private:
  std::array<std::uint32_t, 2> key_;
};

double to_unit_open(std::uint64_t bits);

// Sequential UniformRandomBitGenerator over a Philox stream.
class PhiloxEngine {
 public:
  using result_type = std::uint64_t;

  PhiloxEngine(std::uint64_t seed, std::uint64_t stream) : rng_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (lane_ == 2) {
      block_ = rng_.block(stream_, counter_++);
      lane_ = 0;
    }
    const auto hi = static_cast<std::uint64_t>(block_[2 * lane_]);
    const auto lo = static_cast<std::uint64_t>(block_[2 * lane_ + 1]);
    ++lane_;
    return (hi << 32) | lo;
  }

  double uniform() { return to_unit_open((*this)()); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  CounterRng rng_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int lane_ = 2;
};

}  // namespace rawscore
