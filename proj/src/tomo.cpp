#include "rawscore/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <json.hpp>

#include "rawscore/imgio.hpp"
#include "rawscore/parallel.hpp"

namespace rawscore {

std::vector<double> uniform_angles(std::size_t n, double span_deg) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = span_deg * static_cast<double>(i) / static_cast<double>(n);
  return a;
}

std::size_t detector_count(std::size_t n) {
  auto d = static_cast<std::size_t>(std::ceil(std::sqrt(2.0) * static_cast<double>(n))) + 2;
  if ((d - n) % 2) ++d;
  return d;
}

namespace {

void check_angles(std::span<const double> angles) {
  for (std::size_t i = 1; i < angles.size(); ++i) {
    require(angles[i] > angles[i - 1], ErrorCode::kGeometryMismatch,
            "projection angles must be strictly increasing");
  }
  if (!angles.empty()) {
    require(angles.back() - angles.front() < 360.0, ErrorCode::kGeometryMismatch,
            "projection angles must span less than 360 degrees");
  }
}

// Shadow of a unit pixel on the detector at direction (|cos|, |sin|): the
// convolution of two boxes, a trapezoid of unit area.
struct PixelFootprint {
  double a, t1, t2, h, half;
  PixelFootprint(double c, double s)
      : a(std::min(c, s)), t1(0.5 * std::abs(c - s)), t2(0.5 * (c + s)), h(1.0 / std::max(c, s)),
        half(t2) {}

  // Mass of the footprint left of offset t.
  double cdf(double t) const {
    if (t <= -t2) return 0.0;
    if (t >= t2) return 1.0;
    if (t < -t1) return h * (t + t2) * (t + t2) / (2 * a);
    if (t <= t1) return 0.5 * h * a + h * (t + t1);
    return 1.0 - h * (t2 - t) * (t2 - t) / (2 * a);
  }
};

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Sinogram forward_radon(const RealImage& image, std::span<const double> angles_deg) {
  const Dims d = image.dims();
  require(d.depth == 1 && d.width == d.height && d.width > 0, ErrorCode::kNonSquare,
          "forward projection needs a square 2D image");
  check_angles(angles_deg);
  Sinogram s;
  s.n_angles = angles_deg.size();
  s.n_det = detector_count(d.width);
  s.angles_deg.assign(angles_deg.begin(), angles_deg.end());
  s.data.assign(s.n_angles * s.n_det, 0.0);
  const double c = 0.5 * static_cast<double>(d.width - 1);
  const double cd = 0.5 * static_cast<double>(s.n_det - 1);
  const auto last = static_cast<std::ptrdiff_t>(s.n_det) - 1;
  parallel_for(s.n_angles, [&](std::size_t a) {
    const double t = angles_deg[a] * std::numbers::pi / 180.0;
    const double ct = std::cos(t), st = std::sin(t);
    const PixelFootprint fp(std::abs(ct), std::abs(st));
    double* row = s.data.data() + a * s.n_det;
    for (std::size_t y = 0; y < d.height; ++y) {
      const double yc = c - static_cast<double>(y);
      for (std::size_t x = 0; x < d.width; ++x) {
        const double v = image.at(x, y);
        if (v == 0) continue;
        const double u = (static_cast<double>(x) - c) * ct + yc * st + cd;
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor(u - fp.half + 0.5)));
        const auto hi = std::min(last, static_cast<std::ptrdiff_t>(std::ceil(u + fp.half - 0.5)));
        double prev = fp.cdf(static_cast<double>(lo) - 0.5 - u);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
          const double next = fp.cdf(static_cast<double>(j) + 0.5 - u);
          row[j] += v * (next - prev);
          prev = next;
        }
      }
    }
  });
  return s;
}

std::string to_string(RampFilter f) { return f == RampFilter::kRamp ? "ramp" : "hann"; }

RampFilter ramp_filter_from_string(const std::string& name) {
  if (name == "ramp") return RampFilter::kRamp;
  if (name == "hann") return RampFilter::kHann;
  fail(ErrorCode::kInvalidSpec, "unknown filter '" + name + "'");
}

RealImage fbp_reconstruct(const Sinogram& sino, RampFilter filter, std::size_t out_size) {
  require(sino.n_angles >= 16, ErrorCode::kTooFewAngles, "reconstruction needs at least 16 angles");
  require(sino.angles_deg.size() == sino.n_angles && sino.data.size() == sino.n_angles * sino.n_det,
          ErrorCode::kGeometryMismatch, "sinogram geometry is inconsistent");
  require(out_size > 0 && sino.spacing > 0, ErrorCode::kInvalidSpec, "bad output geometry");
  check_angles(sino.angles_deg);

  std::size_t p = 64;
  while (p < 2 * sino.n_det) p *= 2;
  const std::size_t nf = p / 2 + 1;

  double* buf = fftw_alloc_real(p);
  fftw_complex* spec = fftw_alloc_complex(nf);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(p), buf, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(p), spec, buf, FFTW_ESTIMATE);
  }

  // Band-limited ramp from its sampled impulse response, doubled so that the
  // back-projection scale is pi / (2 N).
  std::fill(buf, buf + p, 0.0);
  buf[0] = 0.25;
  for (std::size_t k = 1; k <= p / 2; ++k) {
    if (k % 2) {
      const double v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(k * k));
      buf[k] = v;
      if (k != p - k) buf[p - k] = v;
    }
  }
  fftw_execute(fwd);
  std::vector<double> response(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    double h = 2.0 * spec[k][0];
    if (filter == RampFilter::kHann) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(p);
      h *= 0.5 * (1.0 + std::cos(w));
    }
    response[k] = h / (static_cast<double>(p) * sino.spacing);
  }

  std::vector<double> filtered(sino.n_angles * sino.n_det);
  for (std::size_t a = 0; a < sino.n_angles; ++a) {
    std::fill(buf, buf + p, 0.0);
    std::copy_n(sino.data.begin() + static_cast<std::ptrdiff_t>(a * sino.n_det), sino.n_det, buf);
    fftw_execute(fwd);
    for (std::size_t k = 0; k < nf; ++k) {
      spec[k][0] *= response[k];
      spec[k][1] *= response[k];
    }
    fftw_execute(inv);
    std::copy_n(buf, sino.n_det, filtered.begin() + static_cast<std::ptrdiff_t>(a * sino.n_det));
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spec);

  std::vector<double> ct(sino.n_angles), st(sino.n_angles);
  for (std::size_t a = 0; a < sino.n_angles; ++a) {
    const double t = sino.angles_deg[a] * std::numbers::pi / 180.0;
    ct[a] = std::cos(t) / sino.spacing;
    st[a] = std::sin(t) / sino.spacing;
  }
  const double c = 0.5 * static_cast<double>(out_size - 1);
  const double cd = 0.5 * static_cast<double>(sino.n_det - 1);
  const double r2 = 0.25 * static_cast<double>(out_size * out_size);
  const double scale = std::numbers::pi / (2.0 * static_cast<double>(sino.n_angles));
  const auto last = static_cast<std::ptrdiff_t>(sino.n_det) - 1;
  RealImage out(Dims{out_size, out_size, 1});
  parallel_for(out_size, [&](std::size_t y) {
    const double yc = c - static_cast<double>(y);
    for (std::size_t x = 0; x < out_size; ++x) {
      const double xc = static_cast<double>(x) - c;
      if (xc * xc + yc * yc > r2) continue;
      double acc = 0;
      for (std::size_t a = 0; a < sino.n_angles; ++a) {
        const double u = xc * ct[a] + yc * st[a] + cd;
        const double fl = std::floor(u);
        const auto j = static_cast<std::ptrdiff_t>(fl);
        const double f = u - fl;
        const double* q = filtered.data() + a * sino.n_det;
        if (j >= 0 && j <= last) acc += (1 - f) * q[j];
        if (j + 1 >= 0 && j + 1 <= last) acc += f * q[j + 1];
      }
      out.at(x, y) = acc * scale;
    }
  });
  return out;
}

RealImage project_volume(const RealImage& volume, std::span<const double> angles_deg) {
  const Dims d = volume.dims();
  require(d.width == d.height, ErrorCode::kNonSquare, "volume slices must be square");
  const std::size_t n_det = detector_count(d.width);
  RealImage out(Dims{n_det, d.depth, angles_deg.size()});
  const Dims plane{d.width, d.height, 1};
  for (std::size_t z = 0; z < d.depth; ++z) {
    std::vector<double> v(volume.storage().begin() + static_cast<std::ptrdiff_t>(z * d.plane()),
                          volume.storage().begin() + static_cast<std::ptrdiff_t>((z + 1) * d.plane()));
    const auto s = forward_radon(RealImage(plane, std::move(v)), angles_deg);
    for (std::size_t a = 0; a < s.n_angles; ++a) {
      for (std::size_t j = 0; j < n_det; ++j) out.at(j, z, a) = s.at(a, j);
    }
  }
  return out;
}

RealImage reconstruct_volume(const RealImage& projections, ProjectionLayout layout,
                             std::span<const double> angles_deg, RampFilter filter,
                             std::size_t out_size) {
  const Dims d = projections.dims();
  const std::size_t n_det = d.width;
  const std::size_t n_angles = layout == ProjectionLayout::kPerAngle ? d.depth : d.height;
  const std::size_t n_slices = layout == ProjectionLayout::kPerAngle ? d.height : d.depth;
  require(n_angles == angles_deg.size(), ErrorCode::kGeometryMismatch,
          "projection count differs from the angle list");
  RealImage out(Dims{out_size, out_size, n_slices});
  parallel_for(n_slices, [&](std::size_t z) {
    Sinogram s;
    s.n_angles = n_angles;
    s.n_det = n_det;
    s.angles_deg.assign(angles_deg.begin(), angles_deg.end());
    s.data.resize(n_angles * n_det);
    for (std::size_t a = 0; a < n_angles; ++a) {
      for (std::size_t j = 0; j < n_det; ++j) {
        s.at(a, j) = layout == ProjectionLayout::kPerAngle ? projections.at(j, z, a)
                                                           : projections.at(j, a, z);
      }
    }
    const auto slice = fbp_reconstruct(s, filter, out_size);
    std::copy(slice.storage().begin(), slice.storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(z * out_size * out_size));
  });
  return out;
}

ImageStack normalize_volume(const RealImage& volume, double low_percentile,
                            double high_percentile) {
  require(low_percentile >= 0 && high_percentile <= 100 && low_percentile < high_percentile,
          ErrorCode::kInvalidSpec, "bad percentile range");
  require(volume.size() > 0, ErrorCode::kGeometryMismatch, "empty volume");
  std::vector<double> sorted = volume.storage();
  std::sort(sorted.begin(), sorted.end());
  auto pick = [&](double pct) {
    const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
    return sorted[static_cast<std::size_t>(std::llround(pos))];
  };
  const double lo = pick(low_percentile), hi = pick(high_percentile);
  std::vector<std::uint16_t> out(volume.size(), 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = (volume[i] - lo) / (hi - lo) * 65535.0;
      out[i] = static_cast<std::uint16_t>(std::clamp(std::nearbyint(v), 0.0, 65535.0));
    }
  }
  return ImageStack(volume.dims(), 16, std::move(out));
}

void save_sinogram(const Sinogram& sino, const std::filesystem::path& tiff_path) {
  const auto [lo_it, hi_it] = std::minmax_element(sino.data.begin(), sino.data.end());
  const double lo = sino.data.empty() ? 0.0 : *lo_it;
  const double hi = sino.data.empty() ? 0.0 : *hi_it;
  const double scale = hi > lo ? (hi - lo) / 65535.0 : 1.0;
  std::vector<std::uint16_t> px(sino.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<std::uint16_t>(std::clamp(std::nearbyint((sino.data[i] - lo) / scale), 0.0, 65535.0));
  }
  write_stack(ImageStack(Dims{sino.n_det, sino.n_angles, 1}, 16, std::move(px)), tiff_path);
  nlohmann::json j = {{"angles", sino.angles_deg}, {"spacing", sino.spacing},
                      {"layout", "per_slice"},     {"offset", lo},
                      {"scale", scale}};
  std::ofstream out(tiff_path.string() + ".json");
  if (!out) fail(ErrorCode::kIoFailure, "cannot write sinogram sidecar");
  out << j.dump(2) << '\n';
}

Sinogram load_sinogram(const std::filesystem::path& tiff_path) {
  const auto img = read_stack(tiff_path);
  std::ifstream in(tiff_path.string() + ".json");
  if (!in) fail(ErrorCode::kIoFailure, "missing sinogram sidecar for " + tiff_path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kCorruptFile, "sinogram sidecar is not valid JSON");
  Sinogram s;
  s.angles_deg = j.at("angles").get<std::vector<double>>();
  s.spacing = j.value("spacing", 1.0);
  s.n_det = img.dims().width;
  s.n_angles = img.dims().height;
  require(s.angles_deg.size() == s.n_angles, ErrorCode::kGeometryMismatch,
          "sidecar angle count differs from the sinogram");
  const double lo = j.value("offset", 0.0), scale = j.value("scale", 1.0);
  s.data.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) s.data[i] = lo + scale * img[i];
  return s;
}

}  // namespace rawscore
