#include "rawscore/codec.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>

#include <jpeglib.h>

#include "rawscore/entropy.hpp"
#include "rawscore/parallel.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

// ---- spec strings -----------------------------------------------------------

CodecSpec CodecSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto number = [&](double lo, double hi) {
    require(!arg.empty(), ErrorCode::kInvalidSpec, "codec '" + text + "' needs an argument");
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == arg.size() && v >= lo && v <= hi, ErrorCode::kInvalidSpec,
            "bad codec argument in '" + text + "'");
    return v;
  };
  CodecSpec spec;
  if (head == "identity" || head == "raw") {
    spec.kind = Kind::kIdentity;
  } else if (head == "bit8") {
    spec.kind = Kind::kBit8;
  } else if (head == "jpeg") {
    spec.kind = Kind::kJpeg;
    const double q = number(1, 100);
    require(q == std::floor(q), ErrorCode::kInvalidSpec, "jpeg quality must be an integer");
    spec.quality = static_cast<int>(q);
  } else if (head == "jpeg-ratio") {
    spec.kind = Kind::kJpegRatio;
    spec.target_ratio = number(1, 1000);
  } else if (head == "noisenorm") {
    spec.kind = Kind::kNoisenorm;
    if (!arg.empty()) spec.q = number(1e-3, 64);
  } else {
    fail(ErrorCode::kInvalidSpec, "unknown codec '" + text + "'");
  }
  if (spec.kind != Kind::kJpeg && spec.kind != Kind::kJpegRatio && spec.kind != Kind::kNoisenorm) {
    require(arg.empty(), ErrorCode::kInvalidSpec, "codec '" + head + "' takes no argument");
  }
  return spec;
}

std::string CodecSpec::to_string() const {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  switch (kind) {
    case Kind::kIdentity: return "identity";
    case Kind::kBit8: return "bit8";
    case Kind::kJpeg: return "jpeg:" + std::to_string(quality);
    case Kind::kJpegRatio: return "jpeg-ratio:" + fmt(target_ratio);
    case Kind::kNoisenorm: return q == 1.0 ? "noisenorm" : "noisenorm:" + fmt(q);
  }
  return "identity";
}

// ---- bit depth conversion ---------------------------------------------------

CodecResult downsample_16_to_8(const ImageStack& stack) {
  require(stack.bit_depth() == 16, ErrorCode::kWrongBitDepth, "downsample expects 16-bit input");
  std::vector<std::uint16_t> out(stack.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // round(v * 255 / 65535) == floor((2 * 255 v + 65535) / (2 * 65535)); 65535 = 255 * 257,
    // so v * 255 / 65535 = v / 257 and an exact half is impossible (257 is odd).
    out[i] = static_cast<std::uint16_t>((2u * stack[i] + 257u) / 514u);
  }
  CodecResult r;
  r.decoded = ImageStack(stack.dims(), 8, std::move(out), stack.voxel_size());
  r.encoded_bytes = stack.size();
  r.compression_ratio = static_cast<double>(stack.byte_size()) / static_cast<double>(r.encoded_bytes);
  r.codec.kind = CodecSpec::Kind::kBit8;
  return r;
}

ImageStack upsample_8_to_16(const ImageStack& stack) {
  require(stack.bit_depth() == 8, ErrorCode::kWrongBitDepth, "upsample expects 8-bit input");
  std::vector<std::uint16_t> out(stack.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint16_t>(stack[i] * 257u);
  return ImageStack(stack.dims(), 16, std::move(out), stack.voxel_size());
}

// ---- JPEG -------------------------------------------------------------------

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void silence(j_common_ptr, int) {}

}  // namespace

std::vector<std::uint8_t> jpeg_encode_slice(const ImageStack& slice8, int quality) {
  require(slice8.bit_depth() == 8 && slice8.dims().is_2d(), ErrorCode::kEncodeFailure,
          "jpeg encodes single 8-bit slices");
  require(quality >= 1 && quality <= 100, ErrorCode::kInvalidSpec, "jpeg quality must be 1..100");
  const auto width = static_cast<JDIMENSION>(slice8.dims().width);
  const auto height = static_cast<JDIMENSION>(slice8.dims().height);
  std::vector<JSAMPLE> row(width);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;

  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  err.mgr.emit_message = silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    fail(ErrorCode::kEncodeFailure, std::string("jpeg encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = width;
  cinfo.image_height = height;
  cinfo.input_components = 1;
  cinfo.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_set_quality(&cinfo, quality, TRUE);
  // Per-image Huffman tables: still baseline, and the size tracks quality.
  cinfo.optimize_coding = TRUE;
  jpeg_start_compress(&cinfo, TRUE);
  const auto data = slice8.data();
  while (cinfo.next_scanline < height) {
    const std::size_t base = static_cast<std::size_t>(cinfo.next_scanline) * width;
    for (JDIMENSION x = 0; x < width; ++x) row[x] = static_cast<JSAMPLE>(data[base + x]);
    JSAMPROW rows[1] = {row.data()};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

ImageStack jpeg_decode_slice(std::span<const std::uint8_t> bytes) {
  require(!bytes.empty(), ErrorCode::kCorruptFile, "empty jpeg stream");
  std::vector<std::uint16_t> pixels;
  std::vector<JSAMPLE> row;

  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  err.mgr.emit_message = silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorCode::kCorruptFile, std::string("jpeg decode: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_GRAYSCALE;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  const std::size_t width = cinfo.output_width, height = cinfo.output_height;
  pixels.resize(width * height);
  row.resize(width);
  while (cinfo.output_scanline < cinfo.output_height) {
    const std::size_t y = cinfo.output_scanline;
    JSAMPROW rows[1] = {row.data()};
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (std::size_t x = 0; x < width; ++x) pixels[y * width + x] = row[x];
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return ImageStack(Dims{width, height, 1}, 8, std::move(pixels));
}

namespace {

struct JpegPass {
  ImageStack decoded8;
  std::size_t bytes = 0;
};

JpegPass jpeg_pass(const ImageStack& stack8, int quality) {
  const std::size_t depth = stack8.dims().depth;
  std::vector<ImageStack> slices(depth);
  std::vector<std::size_t> sizes(depth);
  parallel_for(depth, [&](std::size_t z) {
    const auto bytes = jpeg_encode_slice(stack8.slice(z), quality);
    sizes[z] = bytes.size();
    slices[z] = jpeg_decode_slice(bytes);
  });
  JpegPass pass;
  pass.decoded8 = stack_slices(slices);
  pass.decoded8 = ImageStack(stack8.dims(), 8,
                             std::vector<std::uint16_t>(pass.decoded8.data().begin(),
                                                        pass.decoded8.data().end()),
                             stack8.voxel_size());
  for (auto s : sizes) pass.bytes += s;
  return pass;
}

ImageStack to_8bit(const ImageStack& stack) {
  return stack.bit_depth() == 8 ? stack : downsample_16_to_8(stack).decoded;
}

}  // namespace

CodecResult jpeg_roundtrip(const ImageStack& stack, int quality) {
  require(quality >= 1 && quality <= 100, ErrorCode::kInvalidSpec, "jpeg quality must be 1..100");
  const auto pass = jpeg_pass(to_8bit(stack), quality);
  CodecResult r;
  r.decoded = stack.bit_depth() == 8 ? pass.decoded8 : upsample_8_to_16(pass.decoded8);
  r.encoded_bytes = pass.bytes;
  r.compression_ratio = static_cast<double>(stack.byte_size()) / static_cast<double>(pass.bytes);
  r.codec.kind = CodecSpec::Kind::kJpeg;
  r.codec.quality = quality;
  return r;
}

int jpeg_quality_for_ratio(const ImageStack& stack, double target_ratio) {
  require(target_ratio > 0, ErrorCode::kInvalidSpec, "target ratio must be positive");
  const ImageStack stack8 = to_8bit(stack);
  const double raw = static_cast<double>(stack.byte_size());
  auto ratio = [&](int q) { return raw / static_cast<double>(jpeg_pass(stack8, q).bytes); };
  // Ratio falls with quality; find the highest quality still at or above target.
  int lo = 1, hi = 100;
  if (ratio(lo) < target_ratio) return lo;
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (ratio(mid) >= target_ratio) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  if (lo == 100) return lo;
  const double below = ratio(lo), above = ratio(lo + 1);
  return std::abs(above - target_ratio) < std::abs(below - target_ratio) ? lo + 1 : lo;
}

// ---- noise-normalizing codec -----------------------------------------------

namespace {

constexpr std::uint64_t kDitherStream = 0x4E4E4331ull;  // "NNC1"
constexpr std::uint8_t kBackendRange = 1;
constexpr char kMagic[4] = {'N', 'N', 'C', '1'};

struct Stabilizer {
  double gain, offset, read_variance;

  double forward(double d) const {
    return 2.0 / gain * std::sqrt(std::max(0.0, gain * (d - offset) + read_variance));
  }
  double inverse(double t) const {
    const double s = gain * t / 2.0;
    return (s * s - read_variance) / gain + offset;
  }
};

Stabilizer stabilizer_of(const NoiseModel& model) {
  require(model.gain > 0 && model.read_variance >= 0, ErrorCode::kModelMismatch,
          "noisenorm needs a model with positive gain");
  return {model.gain, model.offset, model.read_variance};
}

double dither(const CounterRng& rng, std::size_t index, double q) {
  return (rng.uniform(kDitherStream, index) - 0.5) * q;
}

void check_input(const ImageStack& stack, const NoiseModel& model, const NoisenormParams& params) {
  require(stack.bit_depth() == 16, ErrorCode::kWrongBitDepth, "noisenorm expects 16-bit input");
  require(model.bit_depth == 16, ErrorCode::kModelMismatch, "noise model is not for 16-bit data");
  require(params.q > 0 && std::isfinite(params.q), ErrorCode::kInvalidSpec,
          "quantization step must be positive");
}

std::uint64_t hash_value(const NoiseModel& model) {
  return std::stoull(model_hash(model), nullptr, 16);
}

// Residuals of the left/up predictor, per slice.
std::vector<std::int64_t> predict(std::span<const std::int64_t> k, std::size_t w, std::size_t h) {
  std::vector<std::int64_t> r(k.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      std::int64_t p = 0;
      if (y == 0 && x > 0) {
        p = k[i - 1];
      } else if (x == 0 && y > 0) {
        p = k[i - w];
      } else if (x > 0) {
        p = (k[i - 1] + k[i - w]) >> 1;
      }
      r[i] = k[i] - p;
    }
  }
  return r;
}

void unpredict(std::span<std::int64_t> r, std::size_t w, std::size_t h) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      std::int64_t p = 0;
      if (y == 0 && x > 0) {
        p = r[i - 1];
      } else if (x == 0 && y > 0) {
        p = r[i - w];
      } else if (x > 0) {
        p = (r[i - 1] + r[i - w]) >> 1;
      }
      r[i] += p;
    }
  }
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));  // little-endian hosts only; checked in CMake
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T get() {
    require(pos_ + sizeof(T) <= in_.size(), ErrorCode::kCorruptFile, "noisenorm header truncated");
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    require(n <= in_.size() - pos_, ErrorCode::kCorruptFile, "noisenorm payload truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::int64_t> noisenorm_quantize(const ImageStack& stack, const NoiseModel& model,
                                             const NoisenormParams& params) {
  check_input(stack, model, params);
  const Stabilizer vst = stabilizer_of(model);
  const CounterRng rng(params.seed);
  std::vector<std::int64_t> k(stack.size());
  const std::size_t plane = stack.dims().plane();
  parallel_for(stack.dims().depth, [&](std::size_t z) {
    for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) {
      const double t = vst.forward(stack[i]);
      k[i] = static_cast<std::int64_t>(std::floor((t + dither(rng, i, params.q)) / params.q + 0.5));
    }
  });
  return k;
}

ImageStack noisenorm_dequantize(std::span<const std::int64_t> levels, Dims dims, int bit_depth,
                                const NoiseModel& model, const NoisenormParams& params) {
  require(levels.size() == dims.count(), ErrorCode::kDimMismatch, "level plane size mismatch");
  const Stabilizer vst = stabilizer_of(model);
  const CounterRng rng(params.seed);
  const double top = static_cast<double>((1u << bit_depth) - 1u);
  std::vector<std::uint16_t> out(levels.size());
  const std::size_t plane = dims.plane();
  parallel_for(dims.depth, [&](std::size_t z) {
    for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) {
      const double t = std::max(0.0, static_cast<double>(levels[i]) * params.q - dither(rng, i, params.q));
      out[i] = static_cast<std::uint16_t>(std::clamp(std::nearbyint(vst.inverse(t)), 0.0, top));
    }
  });
  return ImageStack(dims, bit_depth, std::move(out));
}

ImageStack noisenorm_prepare(const ImageStack& stack, const NoiseModel& model,
                             const NoisenormParams& params) {
  const auto k = noisenorm_quantize(stack, model, params);
  auto out = noisenorm_dequantize(k, stack.dims(), stack.bit_depth(), model, params);
  return ImageStack(stack.dims(), stack.bit_depth(),
                    std::vector<std::uint16_t>(out.data().begin(), out.data().end()),
                    stack.voxel_size());
}

std::vector<std::uint8_t> noisenorm_encode(const ImageStack& stack, const NoiseModel& model,
                                           const NoisenormParams& params) {
  const auto k = noisenorm_quantize(stack, model, params);
  const Dims dims = stack.dims();
  const std::size_t plane = dims.plane();
  std::vector<std::vector<std::uint8_t>> payloads(dims.depth);
  parallel_for(dims.depth, [&](std::size_t z) {
    std::span<const std::int64_t> slice(k.data() + z * plane, plane);
    const auto residuals = predict(slice, dims.width, dims.height);
    payloads[z] = entropy::encode_residuals(residuals, dims.width, dims.height, 1);
  });

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.depth));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(stack.bit_depth()));
  put<std::uint64_t>(out, hash_value(model));
  put<double>(out, params.q);
  put<std::uint64_t>(out, params.seed);
  put<std::uint8_t>(out, kBackendRange);
  for (const auto& p : payloads) put<std::uint64_t>(out, p.size());
  for (const auto& p : payloads) out.insert(out.end(), p.begin(), p.end());
  return out;
}

ImageStack noisenorm_decode(std::span<const std::uint8_t> bytes, const NoiseModel& model) {
  Reader in(bytes);
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0,
          ErrorCode::kUnsupportedFormat, "not a noisenorm container");
  in.take(4);
  Dims dims;
  dims.width = in.get<std::uint32_t>();
  dims.height = in.get<std::uint32_t>();
  dims.depth = in.get<std::uint32_t>();
  const int bit_depth = in.get<std::uint8_t>();
  const auto hash = in.get<std::uint64_t>();
  NoisenormParams params;
  params.q = in.get<double>();
  params.seed = in.get<std::uint64_t>();
  const auto backend = in.get<std::uint8_t>();
  require(bit_depth == 16, ErrorCode::kCorruptFile, "noisenorm container has bad bit depth");
  require(dims.count() > 0 && params.q > 0, ErrorCode::kCorruptFile, "noisenorm header invalid");
  require(backend == kBackendRange, ErrorCode::kUnsupportedFormat, "unknown entropy backend");
  require(hash == hash_value(model), ErrorCode::kModelMismatch,
          "container was encoded with a different noise model");
  require(dims.depth <= in.remaining() / 8, ErrorCode::kCorruptFile, "slice table truncated");
  std::vector<std::uint64_t> sizes(dims.depth);
  for (auto& s : sizes) s = in.get<std::uint64_t>();
  std::vector<std::span<const std::uint8_t>> payloads;
  for (auto s : sizes) payloads.push_back(in.take(static_cast<std::size_t>(s)));

  const std::size_t plane = dims.plane();
  std::vector<std::int64_t> k(dims.count());
  parallel_for(dims.depth, [&](std::size_t z) {
    auto r = entropy::decode_residuals(payloads[z], dims.width, dims.height, 1);
    unpredict(r, dims.width, dims.height);
    std::copy(r.begin(), r.end(), k.begin() + static_cast<std::ptrdiff_t>(z * plane));
  });
  return noisenorm_dequantize(k, dims, bit_depth, model, params);
}

CodecResult noisenorm_roundtrip(const ImageStack& stack, const NoiseModel& model,
                                std::uint64_t seed, double q) {
  const NoisenormParams params{q, seed};
  const auto bytes = noisenorm_encode(stack, model, params);
  const auto decoded = noisenorm_decode(bytes, model);
  CodecResult r;
  r.decoded = ImageStack(stack.dims(), stack.bit_depth(),
                         std::vector<std::uint16_t>(decoded.data().begin(), decoded.data().end()),
                         stack.voxel_size());
  r.encoded_bytes = bytes.size();
  r.compression_ratio = static_cast<double>(stack.byte_size()) / static_cast<double>(bytes.size());
  r.codec.kind = CodecSpec::Kind::kNoisenorm;
  r.codec.q = q;
  return r;
}

// ---- dispatch and diagnostics ----------------------------------------------

CodecResult apply_codec(const ImageStack& stack, const CodecSpec& spec, const NoiseModel* model,
                        std::uint64_t seed) {
  switch (spec.kind) {
    case CodecSpec::Kind::kIdentity: {
      CodecResult r;
      r.decoded = stack;
      r.encoded_bytes = stack.byte_size();
      r.compression_ratio = 1.0;
      r.codec = spec;
      return r;
    }
    case CodecSpec::Kind::kBit8: {
      auto r = downsample_16_to_8(stack);
      r.decoded = upsample_8_to_16(r.decoded);
      return r;
    }
    case CodecSpec::Kind::kJpeg:
      return jpeg_roundtrip(stack, spec.quality);
    case CodecSpec::Kind::kJpegRatio:
      return jpeg_roundtrip(stack, jpeg_quality_for_ratio(stack, spec.target_ratio));
    case CodecSpec::Kind::kNoisenorm:
      require(model != nullptr, ErrorCode::kModelMismatch, "noisenorm needs a noise model");
      return noisenorm_roundtrip(stack, *model, seed, spec.q);
  }
  fail(ErrorCode::kInvalidSpec, "unhandled codec");
}

ArtifactMap artifact_map(const ImageStack& raw, const ImageStack& decoded,
                         const NoiseModel& model) {
  require(raw.dims() == decoded.dims(), ErrorCode::kDimMismatch,
          "artifact map needs equally sized images");
  ArtifactMap m{RealImage(raw.dims())};
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double sigma = sigma_of(model, raw[i]);
    const double v = sigma > 0 ? (static_cast<double>(raw[i]) - decoded[i]) / sigma : 0.0;
    m.delta_over_sigma[i] = v;
    sum += v;
    sum2 += v * v;
    m.max_abs = std::max(m.max_abs, std::abs(v));
  }
  const double n = static_cast<double>(raw.size());
  if (n > 0) {
    m.mean = sum / n;
    m.stddev = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * m.mean * m.mean) / (n - 1))) : 0.0;
  }
  return m;
}

double snr_loss_db(const ImageStack& truth, const ImageStack& raw, const ImageStack& decoded) {
  require(truth.dims() == raw.dims() && raw.dims() == decoded.dims(), ErrorCode::kDimMismatch,
          "snr comparison needs equally sized images");
  double e_raw = 0, e_dec = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double a = static_cast<double>(raw[i]) - truth[i];
    const double b = static_cast<double>(decoded[i]) - truth[i];
    e_raw += a * a;
    e_dec += b * b;
  }
  require(e_raw > 0, ErrorCode::kDegenerateSpread, "raw image carries no noise");
  return 10.0 * std::log10(e_dec / e_raw);
}

}  // namespace rawscore
