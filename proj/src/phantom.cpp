#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "rawscore/imgio.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

namespace {

constexpr int kSubsamples = 4;

constexpr std::array<Ellipse, 10> kSheppLogan = {{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

// An object is described by a signed distance (negative inside) and the
// radius of a sphere bounding it, both in pixels.
struct Shape {
  double cx = 0, cy = 0, cz = 0;
  double a = 1, b = 1, c = 1;  // semi-axes
  double angle = 0;            // in-plane rotation, radians
  double level = 0;            // foreground ADU

  double bound() const { return std::max({a, b, c}); }
  double signed_distance(double x, double y, double z) const {
    const double dx = x - cx, dy = y - cy, dz = z - cz;
    const double cs = std::cos(angle), sn = std::sin(angle);
    const double u = dx * cs + dy * sn;
    const double v = -dx * sn + dy * cs;
    const double rho = std::sqrt((u / a) * (u / a) + (v / b) * (v / b) + (dz / c) * (dz / c));
    // Exact for circles and spheres; a first-order surrogate for ellipses.
    return (rho - 1.0) * std::cbrt(a * b * c);
  }
};

double edge_profile(double signed_distance, double edge_width) {
  if (edge_width <= 0) return signed_distance <= 0 ? 1.0 : 0.0;
  return std::clamp(0.5 - signed_distance / edge_width, 0.0, 1.0);
}

void validate(const PhantomSpec& s) {
  require(s.width > 0 && s.height > 0 && s.depth > 0, ErrorCode::kInvalidSpec,
          "phantom dims must be positive");
  require(s.bit_depth == 8 || s.bit_depth == 16, ErrorCode::kInvalidSpec,
          "phantom bit depth must be 8 or 16");
  const double top = std::ldexp(1.0, s.bit_depth);
  auto in_range = [&](double v) { return v >= 0 && v < top; };
  require(in_range(s.background) && in_range(s.foreground) && in_range(s.level),
          ErrorCode::kInvalidSpec, "phantom intensities must lie in [0, 2^bit_depth)");
  require(in_range(s.foreground * (1 + s.intensity_jitter)), ErrorCode::kInvalidSpec,
          "jittered foreground exceeds the bit depth");
  require(s.radius > 0 && s.radius_jitter >= 0 && s.radius_jitter < s.radius,
          ErrorCode::kInvalidSpec, "radius must be positive and exceed its jitter");
  require(s.edge_width >= 0 && s.intensity_jitter >= 0 && s.intensity_jitter < 1,
          ErrorCode::kInvalidSpec, "edge width and intensity jitter out of range");
  require(s.min_axis_ratio > 0 && s.min_axis_ratio <= 1, ErrorCode::kInvalidSpec,
          "min_axis_ratio must lie in (0, 1]");
  require(s.voxel_size.x > 0 && s.voxel_size.y > 0 && s.voxel_size.z > 0,
          ErrorCode::kInvalidSpec, "voxel size must be positive");
  const bool three_d = s.kind == PhantomKind::kSpheres3d;
  if (!three_d && s.kind != PhantomKind::kFlatfield) {
    require(s.depth == 1, ErrorCode::kInvalidSpec, "2D phantom kinds need depth 1");
  }
}

std::vector<Shape> place_objects(const PhantomSpec& s) {
  PhiloxEngine rng(s.seed, 0);
  const bool three_d = s.kind == PhantomKind::kSpheres3d;
  std::vector<Shape> shapes;
  for (std::size_t k = 0; k < s.count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
      Shape sh;
      const double r = s.radius + s.radius_jitter * (2.0 * rng.uniform() - 1.0);
      sh.a = sh.b = sh.c = r;
      if (s.kind == PhantomKind::kBlobs2d) {
        const double ratio = s.min_axis_ratio + (1.0 - s.min_axis_ratio) * rng.uniform();
        sh.b = r * ratio;
        sh.angle = std::numbers::pi * rng.uniform();
      }
      if (!three_d) sh.c = 1.0;
      sh.level = s.background +
                 (s.foreground - s.background) * (1.0 + s.intensity_jitter * (2.0 * rng.uniform() - 1.0));
      const double reach = sh.bound() + s.margin + 0.5 * s.edge_width;
      auto coord = [&](std::size_t extent) {
        const double lo = reach, hi = static_cast<double>(extent) - 1.0 - reach;
        return lo + (hi - lo) * rng.uniform();
      };
      if (2 * reach >= static_cast<double>(s.width) - 1 ||
          2 * reach >= static_cast<double>(s.height) - 1 ||
          (three_d && 2 * reach >= static_cast<double>(s.depth) - 1)) {
        fail(ErrorCode::kInvalidSpec, "objects do not fit inside the phantom");
      }
      sh.cx = coord(s.width);
      sh.cy = coord(s.height);
      sh.cz = three_d ? coord(s.depth) : 0.0;
      placed = true;
      if (s.non_overlapping) {
        for (const auto& o : shapes) {
          const double d = std::hypot(sh.cx - o.cx, sh.cy - o.cy, sh.cz - o.cz);
          if (d < sh.bound() + o.bound() + s.min_separation + s.edge_width) {
            placed = false;
            break;
          }
        }
      }
      if (placed) shapes.push_back(sh);
    }
    if (!placed) {
      fail(ErrorCode::kInvalidSpec, "could not place " + std::to_string(s.count) +
                                        " non-overlapping objects; lower count or radius");
    }
  }
  return shapes;
}

Phantom render_objects(const PhantomSpec& s) {
  const Dims dims{s.width, s.height, s.depth};
  const bool three_d = s.kind == PhantomKind::kSpheres3d;
  const auto shapes = place_objects(s);

  std::vector<double> value(dims.count(), s.background);
  std::vector<double> best(dims.count(), 0.0);
  LabelMap truth(dims, 0u);

  const double fuzz = 0.5 * s.edge_width + 0.9;  // beyond this a voxel is uniformly in/out
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& sh = shapes[k];
    const double reach = sh.bound() + fuzz;
    auto span_of = [&](double c, std::size_t extent) {
      const auto lo = static_cast<std::ptrdiff_t>(std::floor(c - reach));
      const auto hi = static_cast<std::ptrdiff_t>(std::ceil(c + reach));
      return std::pair<std::size_t, std::size_t>(
          static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0)),
          static_cast<std::size_t>(std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(extent) - 1)));
    };
    const auto [x0, x1] = span_of(sh.cx, s.width);
    const auto [y0, y1] = span_of(sh.cy, s.height);
    const auto [z0, z1] = three_d ? span_of(sh.cz, s.depth) : std::pair<std::size_t, std::size_t>(0, 0);
    for (std::size_t z = z0; z <= z1; ++z) {
      for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
          const double xd = static_cast<double>(x), yd = static_cast<double>(y),
                       zd = static_cast<double>(z);
          const double centre = sh.signed_distance(xd, yd, zd);
          double cover;
          if (centre <= -fuzz) {
            cover = 1.0;
          } else if (centre >= fuzz) {
            continue;
          } else {
            const int nz = three_d ? kSubsamples : 1;
            double acc = 0;
            for (int sz = 0; sz < nz; ++sz) {
              const double oz = three_d ? (sz + 0.5) / kSubsamples - 0.5 : 0.0;
              for (int sy = 0; sy < kSubsamples; ++sy) {
                const double oy = (sy + 0.5) / kSubsamples - 0.5;
                for (int sx = 0; sx < kSubsamples; ++sx) {
                  const double ox = (sx + 0.5) / kSubsamples - 0.5;
                  acc += edge_profile(sh.signed_distance(xd + ox, yd + oy, zd + oz), s.edge_width);
                }
              }
            }
            cover = acc / (nz * kSubsamples * kSubsamples);
          }
          if (cover <= 0) continue;
          const std::size_t i = dims.index(x, y, z);
          const double v = s.background + (sh.level - s.background) * cover;
          if (std::abs(v - s.background) > std::abs(value[i] - s.background)) value[i] = v;
          if (cover >= 0.5 && cover > best[i]) {
            best[i] = cover;
            truth[i] = static_cast<std::uint32_t>(k + 1);
          }
        }
      }
    }
  }

  std::vector<std::uint16_t> data(dims.count());
  const double top = std::ldexp(1.0, s.bit_depth) - 1.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<std::uint16_t>(std::clamp(std::nearbyint(value[i]), 0.0, top));
  }
  return {ImageStack(dims, s.bit_depth, std::move(data), s.voxel_size), std::move(truth)};
}

Phantom render_shepp_logan(const PhantomSpec& s) {
  const Dims dims{s.width, s.height, 1};
  std::vector<std::uint16_t> data(dims.count());
  LabelMap truth(dims, 0u);
  const double w = static_cast<double>(s.width), h = static_cast<double>(s.height);
  auto density = [](double x, double y, std::uint32_t* region) {
    double v = 0;
    for (std::size_t k = 0; k < kSheppLogan.size(); ++k) {
      const auto& e = kSheppLogan[k];
      const double phi = e.phi_deg * std::numbers::pi / 180.0;
      const double dx = x - e.x0, dy = y - e.y0;
      const double u = dx * std::cos(phi) + dy * std::sin(phi);
      const double t = -dx * std::sin(phi) + dy * std::cos(phi);
      if ((u * u) / (e.a * e.a) + (t * t) / (e.b * e.b) <= 1.0) {
        v += e.amplitude;
        if (region) *region = static_cast<std::uint32_t>(k + 1);
      }
    }
    return v;
  };
  const double top = std::ldexp(1.0, s.bit_depth) - 1.0;
  for (std::size_t j = 0; j < s.height; ++j) {
    for (std::size_t i = 0; i < s.width; ++i) {
      double acc = 0;
      for (int sy = 0; sy < kSubsamples; ++sy) {
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double px = static_cast<double>(i) + (sx + 0.5) / kSubsamples;
          const double py = static_cast<double>(j) + (sy + 0.5) / kSubsamples;
          acc += density(2.0 * px / w - 1.0, 1.0 - 2.0 * py / h, nullptr);
        }
      }
      acc /= kSubsamples * kSubsamples;
      std::uint32_t region = 0;
      density((2.0 * static_cast<double>(i) + 1.0) / w - 1.0,
              1.0 - (2.0 * static_cast<double>(j) + 1.0) / h, &region);
      truth.at(i, j) = region;
      const double adu = s.background + (s.foreground - s.background) * acc;
      data[dims.index(i, j)] = static_cast<std::uint16_t>(std::clamp(std::nearbyint(adu), 0.0, top));
    }
  }
  return {ImageStack(dims, s.bit_depth, std::move(data), s.voxel_size), std::move(truth)};
}

}  // namespace

std::span<const Ellipse> shepp_logan_ellipses() { return kSheppLogan; }

Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case PhantomKind::kFlatfield: {
      const Dims dims{spec.width, spec.height, spec.depth};
      const auto v = static_cast<std::uint16_t>(std::nearbyint(spec.level));
      return {ImageStack::filled(dims, spec.bit_depth, v, spec.voxel_size), LabelMap(dims, 0u)};
    }
    case PhantomKind::kSheppLogan2d:
      return render_shepp_logan(spec);
    case PhantomKind::kDisks2d:
    case PhantomKind::kBlobs2d:
    case PhantomKind::kSpheres3d:
      return render_objects(spec);
  }
  fail(ErrorCode::kInvalidSpec, "unknown phantom kind");
}

PhantomKind phantom_kind_from_string(const std::string& name) {
  if (name == "disks2d") return PhantomKind::kDisks2d;
  if (name == "blobs2d") return PhantomKind::kBlobs2d;
  if (name == "spheres3d") return PhantomKind::kSpheres3d;
  if (name == "shepp_logan2d") return PhantomKind::kSheppLogan2d;
  if (name == "flatfield") return PhantomKind::kFlatfield;
  fail(ErrorCode::kInvalidSpec, "unknown phantom kind '" + name + "'");
}

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::kDisks2d: return "disks2d";
    case PhantomKind::kBlobs2d: return "blobs2d";
    case PhantomKind::kSpheres3d: return "spheres3d";
    case PhantomKind::kSheppLogan2d: return "shepp_logan2d";
    case PhantomKind::kFlatfield: return "flatfield";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = {{"kind", to_string(s.kind)},
       {"width", s.width},
       {"height", s.height},
       {"depth", s.depth},
       {"bit_depth", s.bit_depth},
       {"voxel_size", {s.voxel_size.x, s.voxel_size.y, s.voxel_size.z}},
       {"background", s.background},
       {"foreground", s.foreground},
       {"level", s.level},
       {"count", s.count},
       {"radius", s.radius},
       {"radius_jitter", s.radius_jitter},
       {"min_axis_ratio", s.min_axis_ratio},
       {"edge_width", s.edge_width},
       {"intensity_jitter", s.intensity_jitter},
       {"non_overlapping", s.non_overlapping},
       {"min_separation", s.min_separation},
       {"margin", s.margin},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  try {
    s = PhantomSpec{};
    s.kind = phantom_kind_from_string(j.at("kind").get<std::string>());
    if (s.kind == PhantomKind::kSpheres3d) s.depth = 64;
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    opt("width", s.width);
    opt("height", s.height);
    opt("depth", s.depth);
    opt("bit_depth", s.bit_depth);
    if (j.contains("voxel_size")) {
      const auto v = j.at("voxel_size").get<std::vector<double>>();
      require(v.size() == 3, ErrorCode::kInvalidSpec, "voxel_size must have 3 components");
      s.voxel_size = {v[0], v[1], v[2]};
    }
    opt("background", s.background);
    opt("foreground", s.foreground);
    opt("level", s.level);
    opt("count", s.count);
    opt("radius", s.radius);
    opt("radius_jitter", s.radius_jitter);
    opt("min_axis_ratio", s.min_axis_ratio);
    opt("edge_width", s.edge_width);
    opt("intensity_jitter", s.intensity_jitter);
    opt("non_overlapping", s.non_overlapping);
    opt("min_separation", s.min_separation);
    opt("margin", s.margin);
    opt("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidSpec, std::string("phantom spec: ") + e.what());
  }
}

}  // namespace rawscore
