#include <gtest/gtest.h>

#include <cmath>

#include "rawscore/codec.hpp"
#include "rawscore/entropy.hpp"
#include "rawscore/imgio.hpp"
#include "rawscore/rng.hpp"
#include "rawscore/synth.hpp"

using namespace rawscore;

namespace {

ImageStack noisy_scene(std::uint64_t seed, Dims dims = {48, 40, 2}) {
  PhantomSpec spec;
  spec.width = dims.width;
  spec.height = dims.height;
  spec.count = 3;
  spec.radius = 6;
  spec.background = 400;
  spec.foreground = 3000;
  spec.seed = seed;
  auto scene = generate_phantom(spec).image;
  std::vector<ImageStack> slices;
  for (std::size_t z = 0; z < dims.depth; ++z) {
    slices.push_back(acquire(scene, NoiseModel::parametric(2.0, 100.0, 9.0), seed + z));
  }
  return stack_slices(slices);
}

}  // namespace

TEST(CodecSpec, ParseAndCanonicalText) {
  for (const char* text : {"identity", "bit8", "jpeg:75", "jpeg-ratio:10", "noisenorm",
                           "noisenorm:0.5"}) {
    EXPECT_EQ(CodecSpec::parse(text).to_string(), text);
  }
  EXPECT_EQ(CodecSpec::parse("noisenorm:1").to_string(), "noisenorm");
  for (const char* bad : {"jpeg", "jpeg:0", "jpeg:101", "jpeg:7.5", "bit8:3", "zip", "noisenorm:-1"}) {
    try {
      CodecSpec::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec) << bad;
    }
  }
}

TEST(Bit8, MatchesRoundedScaling) {
  std::vector<std::uint16_t> v(65536);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(i);
  const ImageStack s({256, 256, 1}, 16, v);
  const auto r = downsample_16_to_8(s);
  EXPECT_EQ(r.decoded.bit_depth(), 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    ASSERT_EQ(r.decoded[i], static_cast<std::uint16_t>(std::lround(i * 255.0 / 65535.0))) << i;
  }
  EXPECT_DOUBLE_EQ(r.compression_ratio, 2.0);
  const auto up = upsample_8_to_16(r.decoded);
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(up[i], r.decoded[i] * 257);
  // Error bounded by half a step of 257.
  const auto applied = apply_codec(s, CodecSpec::parse("bit8"), nullptr, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    ASSERT_LE(std::abs(int(applied.decoded[i]) - int(i)), 128);
  }
}

TEST(Bit8, RejectsEightBitInput) {
  const auto s = ImageStack::filled({4, 4, 1}, 8, 3);
  try {
    downsample_16_to_8(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWrongBitDepth);
  }
}

TEST(Jpeg, RoundTripQualityOrdering) {
  const auto s = noisy_scene(2);
  const auto hi = jpeg_roundtrip(s, 95);
  const auto lo = jpeg_roundtrip(s, 20);
  EXPECT_EQ(hi.decoded.dims(), s.dims());
  EXPECT_EQ(hi.decoded.bit_depth(), 16);
  EXPECT_GT(lo.compression_ratio, hi.compression_ratio);
  EXPECT_EQ(hi.codec.to_string(), "jpeg:95");
}

TEST(Jpeg, CorruptStream) {
  const std::vector<std::uint8_t> junk = {0xff, 0xd8, 0x00, 0x01, 0x02};
  try {
    jpeg_decode_slice(junk);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptFile);
  }
}

TEST(Jpeg, RatioSearchResolvesToQuality) {
  const auto s = noisy_scene(3, {64, 64, 1});
  const auto r = apply_codec(s, CodecSpec::parse("jpeg-ratio:6"), nullptr, 0);
  EXPECT_EQ(r.codec.kind, CodecSpec::Kind::kJpeg);
  EXPECT_GE(r.codec.quality, 1);
  EXPECT_LE(r.codec.quality, 100);
}

TEST(Noisenorm, DecodeEqualsPrepare) {
  const auto m = NoiseModel::parametric(2.0, 100.0, 9.0);
  const auto s = noisy_scene(4);
  for (double q : {0.5, 1.0, 2.0}) {
    const NoisenormParams params{q, 77};
    const auto bytes = noisenorm_encode(s, m, params);
    EXPECT_EQ(noisenorm_decode(bytes, m), noisenorm_prepare(s, m, params)) << q;
  }
}

TEST(Noisenorm, ErrorBoundedByNoise) {
  const auto m = NoiseModel::parametric(2.0, 100.0, 9.0);
  const auto s = noisy_scene(5);
  const auto r = noisenorm_roundtrip(s, m, 9);
  EXPECT_GT(r.compression_ratio, 2.0);
  const auto art = artifact_map(s, r.decoded, m);
  EXPECT_LT(std::abs(art.mean), 0.05);
  EXPECT_NEAR(art.stddev, 1.0 / std::sqrt(12.0), 0.05);
}

TEST(Noisenorm, WrongModelAndCorruptContainer) {
  const auto m = NoiseModel::parametric(2.0, 100.0, 9.0);
  const auto s = noisy_scene(6, {48, 40, 1});
  auto bytes = noisenorm_encode(s, m, {1.0, 1});
  try {
    noisenorm_decode(bytes, NoiseModel::parametric(2.1, 100.0, 9.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kModelMismatch);
  }
  bytes.resize(bytes.size() - 10);
  EXPECT_THROW(noisenorm_decode(bytes, m), Error);
  bytes[0] = 'X';
  try {
    noisenorm_decode(bytes, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedFormat);
  }
  try {
    apply_codec(s, CodecSpec::parse("noisenorm"), nullptr, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kModelMismatch);
  }
}

TEST(Entropy, ResidualRoundTripIncludingEscapes) {
  PhiloxEngine e(1, 2);
  std::vector<std::int64_t> r(37 * 23);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto u = e.below(100);
    if (u < 80) r[i] = static_cast<std::int64_t>(e.below(7)) - 3;
    else if (u < 98) r[i] = static_cast<std::int64_t>(e.below(2001)) - 1000;
    else r[i] = (u % 2 ? 1 : -1) * static_cast<std::int64_t>(e() >> 20);
  }
  const auto bytes = entropy::encode_residuals(r, 37, 23, 1);
  EXPECT_EQ(entropy::decode_residuals(bytes, 37, 23, 1), r);
}

TEST(Diagnostics, SnrLossOfIdentityIsZero) {
  const auto truth = ImageStack::filled({8, 8, 1}, 16, 1000);
  const auto raw = acquire(truth, NoiseModel::parametric(2.0, 100.0, 9.0), 1);
  EXPECT_DOUBLE_EQ(snr_loss_db(truth, raw, raw), 0.0);
}

TEST(Bit8, EndpointsAndEightBitIdentity) {
  const ImageStack s({4, 1, 1}, 16, {0, 256, 32768, 65535});
  const auto r = downsample_16_to_8(s);
  EXPECT_EQ(r.decoded[0], 0);
  EXPECT_EQ(r.decoded[1], 1);
  EXPECT_EQ(r.decoded[2], 128);
  EXPECT_EQ(r.decoded[3], 255);
  std::vector<std::uint16_t> v(256);
  for (std::size_t i = 0; i < 256; ++i) v[i] = static_cast<std::uint16_t>(i);
  const ImageStack e({16, 16, 1}, 8, v);
  EXPECT_EQ(downsample_16_to_8(upsample_8_to_16(e)).decoded, e);
}

TEST(Jpeg, FlatfieldExactAtModerateQuality) {
  // The DC quantizer step is at most 8 from quality 75 up, so constants survive.
  for (int q : {75, 90, 100}) {
    for (std::uint16_t level : {0, 12345, 32768, 65535}) {
      const auto s = ImageStack::filled({24, 16, 1}, 16, level);
      const auto r = jpeg_roundtrip(s, q);
      const auto expect = upsample_8_to_16(downsample_16_to_8(s).decoded);
      EXPECT_EQ(r.decoded, expect) << q << " " << level;
    }
  }
}

TEST(Jpeg, SmoothGradientPsnr) {
  std::vector<std::uint16_t> v(256 * 256);
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 256; ++x) v[y * 256 + x] = static_cast<std::uint16_t>((x + y) * 128);
  const ImageStack s({256, 256, 1}, 16, v);
  const auto ref8 = downsample_16_to_8(s).decoded;
  const auto dec8 = downsample_16_to_8(jpeg_roundtrip(s, 95).decoded).decoded;
  double mse = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = double(ref8[i]) - double(dec8[i]);
    mse += d * d;
  }
  mse /= double(v.size());
  const double psnr = mse == 0 ? 99.0 : 10 * std::log10(255.0 * 255.0 / mse);
  EXPECT_GE(psnr, 40.0);
}

TEST(Jpeg, RatioMonotoneInQuality) {
  PhantomSpec spec;
  spec.count = 12;
  spec.radius = 14;
  spec.background = 8000;
  spec.foreground = 40000;
  spec.edge_width = 2;
  spec.seed = 8;
  const auto s = acquire(generate_phantom(spec).image, NoiseModel::parametric(40.0, 100.0, 400.0), 8);
  double prev = 1e300;
  for (int q = 5; q <= 100; q += 5) {
    const double r = jpeg_roundtrip(s, q).compression_ratio;
    EXPECT_LE(r, prev * (1 + 1e-12)) << q;
    prev = r;
  }
}

TEST(Diagnostics, ArtifactMapFormula) {
  // sigma(1000) = 30 with K = 1, offset 100, read variance 0.
  const auto m = NoiseModel::parametric(1.0, 100.0, 0.0);
  const auto raw = ImageStack::filled({2, 2, 1}, 16, 1000);
  const auto dec = ImageStack::filled({2, 2, 1}, 16, 970);
  const auto a = artifact_map(raw, dec, m);
  EXPECT_DOUBLE_EQ(a.delta_over_sigma[0], 1.0);
  EXPECT_DOUBLE_EQ(a.mean, 1.0);
  EXPECT_DOUBLE_EQ(a.max_abs, 1.0);
  EXPECT_TRUE(artifact_map(raw, raw, m).max_abs == 0.0);
}
