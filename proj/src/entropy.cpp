#include "rawscore/entropy.hpp"

#include <algorithm>
#include <bit>

#include "rawscore/error.hpp"

namespace rawscore::entropy {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kMaxTotal = 1u << 16;
constexpr std::uint32_t kIncrement = 24;

constexpr std::uint32_t kDirect = 48;  // zigzag values coded as their own symbol
constexpr std::uint32_t kEscape = kDirect;
constexpr std::uint32_t kContexts = 8;
constexpr std::uint32_t kWidthSymbols = 65;

std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
std::int64_t unzigzag(std::uint64_t z) {
  return static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1);
}

std::uint32_t context_of(std::uint64_t left, std::uint64_t up) {
  const std::uint64_t activity = left + up;
  return std::min<std::uint32_t>(kContexts - 1, static_cast<std::uint32_t>(std::bit_width(activity)));
}

}  // namespace

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
  const std::uint32_t r = range_ / total;
  low_ += static_cast<std::uint64_t>(r) * cum;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> in) : in_(in) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ < in_.size()) return in_[pos_++];
  overrun_ = true;
  return 0;
}

std::uint32_t RangeDecoder::target(std::uint32_t total) {
  step_ = range_ / total;
  return std::min(code_ / step_, total - 1);
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  code_ -= step_ * cum;
  range_ = step_ * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next();
  }
}

AdaptiveModel::AdaptiveModel(std::uint32_t symbols) : freq_(symbols, 1), total_(symbols) {}

void AdaptiveModel::update(std::uint32_t symbol) {
  freq_[symbol] += kIncrement;
  total_ += kIncrement;
  if (total_ > kMaxTotal) {
    total_ = 0;
    for (auto& f : freq_) {
      f = (f + 1) / 2;
      total_ += f;
    }
  }
}

void AdaptiveModel::encode(RangeEncoder& enc, std::uint32_t symbol) {
  std::uint32_t cum = 0;
  for (std::uint32_t s = 0; s < symbol; ++s) cum += freq_[s];
  enc.encode(cum, freq_[symbol], total_);
  update(symbol);
}

std::uint32_t AdaptiveModel::decode(RangeDecoder& dec) {
  const std::uint32_t t = dec.target(total_);
  std::uint32_t cum = 0, s = 0;
  while (cum + freq_[s] <= t) cum += freq_[s++];
  dec.consume(cum, freq_[s]);
  update(s);
  return s;
}

namespace {

void encode_uniform(RangeEncoder& enc, std::uint64_t value, int bits) {
  for (int shift = 0; shift < bits; shift += 16) {
    const int chunk = std::min(16, bits - shift);
    const auto v = static_cast<std::uint32_t>((value >> shift) & ((1u << chunk) - 1));
    enc.encode(v, 1, 1u << chunk);
  }
}

std::uint64_t decode_uniform(RangeDecoder& dec, int bits) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < bits; shift += 16) {
    const int chunk = std::min(16, bits - shift);
    const std::uint32_t v = dec.target(1u << chunk);
    dec.consume(v, 1);
    value |= static_cast<std::uint64_t>(v) << shift;
  }
  return value;
}

template <typename Visit>
void walk(std::size_t width, std::size_t height, std::size_t depth, Visit&& visit) {
  std::size_t i = 0;
  for (std::size_t z = 0; z < depth; ++z) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x, ++i) {
        const bool has_left = x > 0, has_up = y > 0;
        visit(i, has_left ? i - 1 : i, has_up ? i - width : i, has_left, has_up);
      }
    }
  }
}

}  // namespace

std::vector<std::uint8_t> encode_residuals(std::span<const std::int64_t> residuals,
                                           std::size_t width, std::size_t height,
                                           std::size_t depth) {
  require(residuals.size() == width * height * depth, ErrorCode::kEncodeFailure,
          "residual count does not match plane size");
  RangeEncoder enc;
  std::vector<AdaptiveModel> models(kContexts, AdaptiveModel(kDirect + 1));
  AdaptiveModel widths(kWidthSymbols);
  std::vector<std::uint64_t> mags(residuals.size());
  walk(width, height, depth, [&](std::size_t i, std::size_t l, std::size_t u, bool hl, bool hu) {
    const std::uint64_t z = zigzag(residuals[i]);
    mags[i] = z;
    const auto ctx = context_of(hl ? mags[l] : 0, hu ? mags[u] : 0);
    if (z < kDirect) {
      models[ctx].encode(enc, static_cast<std::uint32_t>(z));
    } else {
      models[ctx].encode(enc, kEscape);
      const std::uint64_t extra = z - kDirect;
      const int bits = std::bit_width(extra);
      widths.encode(enc, static_cast<std::uint32_t>(bits));
      encode_uniform(enc, extra, bits);
    }
  });
  return enc.finish();
}

std::vector<std::int64_t> decode_residuals(std::span<const std::uint8_t> bytes, std::size_t width,
                                           std::size_t height, std::size_t depth) {
  RangeDecoder dec(bytes);
  std::vector<AdaptiveModel> models(kContexts, AdaptiveModel(kDirect + 1));
  AdaptiveModel widths(kWidthSymbols);
  std::vector<std::uint64_t> mags(width * height * depth);
  std::vector<std::int64_t> out(mags.size());
  walk(width, height, depth, [&](std::size_t i, std::size_t l, std::size_t u, bool hl, bool hu) {
    const auto ctx = context_of(hl ? mags[l] : 0, hu ? mags[u] : 0);
    std::uint64_t z = models[ctx].decode(dec);
    if (z == kEscape) {
      const int bits = static_cast<int>(widths.decode(dec));
      z = kDirect + decode_uniform(dec, bits);
    }
    mags[i] = z;
    out[i] = unzigzag(z);
  });
  if (dec.overrun()) fail(ErrorCode::kCorruptFile, "entropy payload truncated");
  return out;
}

}  // namespace rawscore::entropy
