#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rawscore::entropy {

// Byte-oriented range coder with carry propagation (LZMA layout).
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total);
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> in);
  // Returns the target frequency; call consume() with the decoded symbol.
  std::uint32_t target(std::uint32_t total);
  void consume(std::uint32_t cum, std::uint32_t freq);
  bool overrun() const { return overrun_; }

 private:
  std::uint8_t next();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t step_ = 0;
  bool overrun_ = false;
};

// Adaptive frequency table over a small alphabet.
class AdaptiveModel {
 public:
  explicit AdaptiveModel(std::uint32_t symbols);

  void encode(RangeEncoder& enc, std::uint32_t symbol);
  std::uint32_t decode(RangeDecoder& dec);

 private:
  void update(std::uint32_t symbol);

  std::vector<std::uint32_t> freq_;
  std::uint32_t total_ = 0;
};

// Signed residual plane codec: zigzag residuals, context-split adaptive
// models, escapes for large magnitudes. Contexts depend only on already
// decoded neighbours, so decode mirrors encode exactly.
std::vector<std::uint8_t> encode_residuals(std::span<const std::int64_t> residuals,
                                           std::size_t width, std::size_t height,
                                           std::size_t depth);
std::vector<std::int64_t> decode_residuals(std::span<const std::uint8_t> bytes, std::size_t width,
                                           std::size_t height, std::size_t depth);

}  // namespace rawscore::entropy
