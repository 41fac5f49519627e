#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rawscore/calib.hpp"
#include "rawscore/image.hpp"

namespace rawscore {

// Which data-reduction path to apply. Canonical text forms:
//   identity | bit8 | jpeg:<quality> | jpeg-ratio:<target> | noisenorm[:<q>]
struct CodecSpec {
  enum class Kind { kIdentity, kBit8, kJpeg, kJpegRatio, kNoisenorm };

  Kind kind = Kind::kIdentity;
  int quality = 90;           // kJpeg
  double target_ratio = 10;   // kJpegRatio
  double q = 1.0;             // kNoisenorm quantization step, noise-std units

  static CodecSpec parse(const std::string& text);
  std::string to_string() const;
  friend bool operator==(const CodecSpec&, const CodecSpec&) = default;
};

struct CodecResult {
  ImageStack decoded;
  std::size_t encoded_bytes = 0;
  double compression_ratio = 0;  // original bytes / encoded bytes
  CodecSpec codec;               // resolved (jpeg-ratio becomes jpeg:<q>)
};

// 16-bit -> 8-bit by round(v * 255 / 65535). The decoded stack is 8-bit.
CodecResult downsample_16_to_8(const ImageStack& stack);
// 8-bit -> 16-bit by v * 257.
ImageStack upsample_8_to_16(const ImageStack& stack);

// Baseline JPEG per slice on the 8-bit reduction, decoded and upsampled.
CodecResult jpeg_roundtrip(const ImageStack& stack, int quality);
// Raw JPEG of one 8-bit slice, and its decoder.
std::vector<std::uint8_t> jpeg_encode_slice(const ImageStack& slice8, int quality);
ImageStack jpeg_decode_slice(std::span<const std::uint8_t> bytes);
// Quality in 1..100 whose ratio is nearest the target.
int jpeg_quality_for_ratio(const ImageStack& stack, double target_ratio);

// Noise-normalizing codec. Stage 1 maps each pixel to an integer level k in
// a variance-stabilized domain with subtractive dither; stages 2-3 code the
// k plane losslessly and invert.
struct NoisenormParams {
  double q = 1.0;
  std::uint64_t seed = 0;
};

std::vector<std::int64_t> noisenorm_quantize(const ImageStack& stack, const NoiseModel& model,
                                             const NoisenormParams& params);
ImageStack noisenorm_dequantize(std::span<const std::int64_t> levels, Dims dims, int bit_depth,
                                const NoiseModel& model, const NoisenormParams& params);
// Quantize then dequantize: what decode(encode(stack)) must reproduce.
ImageStack noisenorm_prepare(const ImageStack& stack, const NoiseModel& model,
                             const NoisenormParams& params);
// "NNC1" container.
std::vector<std::uint8_t> noisenorm_encode(const ImageStack& stack, const NoiseModel& model,
                                           const NoisenormParams& params);
ImageStack noisenorm_decode(std::span<const std::uint8_t> bytes, const NoiseModel& model);
CodecResult noisenorm_roundtrip(const ImageStack& stack, const NoiseModel& model,
                                std::uint64_t seed, double q = 1.0);

// Dispatch; the decoded stack always has the input's bit depth. The model is
// needed only for noisenorm.
CodecResult apply_codec(const ImageStack& stack, const CodecSpec& spec, const NoiseModel* model,
                        std::uint64_t seed);

struct ArtifactMap {
  RealImage delta_over_sigma;  // (raw - decoded) / sigma(raw)
  double mean = 0;
  double stddev = 0;
  double max_abs = 0;
};

ArtifactMap artifact_map(const ImageStack& raw, const ImageStack& decoded,
                         const NoiseModel& model);

// Per-pixel SNR loss in dB of `decoded` against `raw`, both compared with a
// known noiseless scene: 10 log10(mse(decoded) / mse(raw)).
double snr_loss_db(const ImageStack& truth, const ImageStack& raw, const ImageStack& decoded);

}  // namespace rawscore
