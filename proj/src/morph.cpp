#include "rawscore/morph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "rawscore/parallel.hpp"

namespace rawscore {

// ---- labelling --------------------------------------------------------------

namespace {

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

void unite(std::vector<std::uint32_t>& parent, std::uint32_t a, std::uint32_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) {
    parent[b] = a;
  } else {
    parent[a] = b;
  }
}

}  // namespace

LabeledObjects label_components(const Mask& mask, int connectivity) {
  const Dims d = mask.dims();
  const bool is3 = d.depth > 1;
  require(is3 ? (connectivity == 6 || connectivity == 26) : (connectivity == 4 || connectivity == 8),
          ErrorCode::kInvalidSpec, "unsupported connectivity " + std::to_string(connectivity));

  // Already-visited neighbour offsets (dx, dy, dz).
  std::vector<std::array<int, 3>> back;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (!is3 && dz != 0) continue;
        const bool earlier = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
        if (!earlier) continue;
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if ((connectivity == 4 || connectivity == 6) && manhattan != 1) continue;
        back.push_back({dx, dy, dz});
      }
    }
  }

  LabeledObjects out;
  out.labels = LabelMap(d, 0u);
  std::vector<std::uint32_t> parent{0};
  auto& lab = out.labels;
  for (std::size_t z = 0; z < d.depth; ++z) {
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x) {
        const std::size_t i = d.index(x, y, z);
        if (!mask[i]) continue;
        std::uint32_t current = 0;
        for (const auto& o : back) {
          const auto nx = static_cast<std::ptrdiff_t>(x) + o[0];
          const auto ny = static_cast<std::ptrdiff_t>(y) + o[1];
          const auto nz = static_cast<std::ptrdiff_t>(z) + o[2];
          if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(d.width) ||
              ny >= static_cast<std::ptrdiff_t>(d.height)) {
            continue;
          }
          const std::uint32_t n = lab.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                         static_cast<std::size_t>(nz));
          if (n == 0) continue;
          if (current == 0) {
            current = n;
          } else if (n != current) {
            unite(parent, current, n);
          }
        }
        if (current == 0) {
          current = static_cast<std::uint32_t>(parent.size());
          parent.push_back(current);
        }
        lab[i] = current;
      }
    }
  }

  std::vector<std::uint32_t> final_label(parent.size(), 0);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    if (!lab[i]) continue;
    const auto root = find_root(parent, lab[i]);
    if (!final_label[root]) final_label[root] = static_cast<std::uint32_t>(++out.count);
    lab[i] = final_label[root];
  }
  return out;
}

LabeledObjects label_components(const Mask& mask) {
  return label_components(mask, mask.dims().depth > 1 ? 26 : 8);
}

std::vector<std::vector<std::size_t>> object_pixels(const LabeledObjects& objects) {
  std::vector<std::vector<std::size_t>> px(objects.count);
  for (std::size_t i = 0; i < objects.labels.size(); ++i) {
    if (const auto l = objects.labels[i]) px[l - 1].push_back(i);
  }
  return px;
}

// ---- 2D parameters ----------------------------------------------------------

namespace {

using Point = std::array<double, 2>;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<Point> convex_hull(std::vector<Point> p) {
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Point> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

// Outer crack boundary, corner coordinates (pixel (x, y) spans [x, x+1]),
// keeping the object on the right-hand side; only turning points are kept.
std::vector<std::array<std::int64_t, 2>> trace_outline(const std::vector<std::uint8_t>& grid,
                                                       std::int64_t w, std::int64_t h,
                                                       std::int64_t x0, std::int64_t y0) {
  auto inside = [&](std::int64_t x, std::int64_t y) {
    return x >= 0 && y >= 0 && x < w && y < h && grid[static_cast<std::size_t>(y * w + x)];
  };
  static constexpr int kDx[4] = {1, 0, -1, 0};
  static constexpr int kDy[4] = {0, 1, 0, -1};
  // Cells ahead-left and ahead-right of a vertex for each heading.
  static constexpr int kAl[4][2] = {{0, -1}, {0, 0}, {-1, 0}, {-1, -1}};
  static constexpr int kAr[4][2] = {{0, 0}, {-1, 0}, {-1, -1}, {0, -1}};

  std::vector<std::array<std::int64_t, 2>> verts{{x0, y0}};
  std::int64_t x = x0, y = y0;
  int dir = 0;
  for (;;) {
    x += kDx[dir];
    y += kDy[dir];
    if (x == x0 && y == y0) break;
    int next;
    if (inside(x + kAl[dir][0], y + kAl[dir][1])) {
      next = (dir + 3) % 4;
    } else if (inside(x + kAr[dir][0], y + kAr[dir][1])) {
      next = dir;
    } else {
      next = (dir + 1) % 4;
    }
    if (next != dir) verts.push_back({x, y});
    dir = next;
  }
  return verts;
}

// Corner-corrected length of a traced outline (straight runs count 1 per
// step; each isolated corner is shortened towards a diagonal).
double traced_perimeter(const std::vector<std::array<std::int64_t, 2>>& v) {
  const std::size_t n = v.size();
  std::int64_t sumdx = 0, sumdy = 0, corners = 0;
  std::int64_t dx1 = v[0][0] - v[n - 1][0];
  std::int64_t dy1 = v[0][1] - v[n - 1][1];
  std::int64_t side1 = std::abs(dx1) + std::abs(dy1);
  bool corner = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t next = (i + 1) % n;
    const std::int64_t dx2 = v[next][0] - v[i][0];
    const std::int64_t dy2 = v[next][1] - v[i][1];
    sumdx += std::abs(dx1);
    sumdy += std::abs(dy1);
    const std::int64_t side2 = std::abs(dx2) + std::abs(dy2);
    if (side1 > 1 || !corner) {
      corner = true;
      ++corners;
    } else {
      corner = false;
    }
    dx1 = dx2;
    dy1 = dy2;
    side1 = side2;
  }
  return static_cast<double>(sumdx + sumdy) - static_cast<double>(corners) * (2.0 - std::sqrt(2.0));
}

// Degrees in [0, 180) for a direction given in y-down image coordinates.
double axis_angle(double dx, double dy_down) {
  double a = std::atan2(-dy_down, dx) * 180.0 / std::numbers::pi;
  a = std::fmod(a, 180.0);
  if (a < 0) a += 180.0;
  if (a >= 180.0) a -= 180.0;
  return a;
}

}  // namespace

ObjectRecord2D object_params_2d(const std::vector<std::array<std::int64_t, 2>>& pixels) {
  require(!pixels.empty(), ErrorCode::kInvalidSpec, "object has no pixels");
  ObjectRecord2D r;
  std::int64_t minx = pixels[0][0], maxx = minx, miny = pixels[0][1], maxy = miny;
  double sx = 0, sy = 0;
  for (const auto& p : pixels) {
    minx = std::min(minx, p[0]);
    maxx = std::max(maxx, p[0]);
    miny = std::min(miny, p[1]);
    maxy = std::max(maxy, p[1]);
    sx += static_cast<double>(p[0]);
    sy += static_cast<double>(p[1]);
  }
  const double n = static_cast<double>(pixels.size());
  r.area = n;
  r.x_cm = sx / n;
  r.y_cm = sy / n;

  double cxx = 0, cyy = 0, cxy = 0;
  for (const auto& p : pixels) {
    const double dx = static_cast<double>(p[0]) - r.x_cm;
    const double dy = static_cast<double>(p[1]) - r.y_cm;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double mid = 0.5 * (cxx + cyy);
  const double rad = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
  const double l1 = mid + rad, l2 = std::max(0.0, mid - rad);
  if (l2 > 0) {
    // Ellipse with the same area and the same axis ratio as the moments.
    const double ratio = std::sqrt(l1 / l2);
    r.major = 2.0 * std::sqrt(n / std::numbers::pi * ratio);
    r.minor = 2.0 * std::sqrt(n / std::numbers::pi / ratio);
  } else {
    r.major = 4.0 * std::sqrt(l1);
    r.minor = 0;
    r.degenerate = true;
  }
  // Major-axis direction in y-down coordinates.
  r.angle = axis_angle(std::cos(0.5 * std::atan2(2 * cxy, cxx - cyy)),
                       std::sin(0.5 * std::atan2(2 * cxy, cxx - cyy)));

  const std::int64_t w = maxx - minx + 1, h = maxy - miny + 1;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(w * h), 0);
  std::int64_t x0 = w, y0 = h;
  for (const auto& p : pixels) {
    const std::int64_t lx = p[0] - minx, ly = p[1] - miny;
    grid[static_cast<std::size_t>(ly * w + lx)] = 1;
    if (ly < y0 || (ly == y0 && lx < x0)) {
      x0 = lx;
      y0 = ly;
    }
  }
  const auto outline = trace_outline(grid, w, h, x0, y0);
  r.perimeter = traced_perimeter(outline);
  r.circularity = 4.0 * std::numbers::pi * n / (r.perimeter * r.perimeter);

  // Hull of pixel corners, shifted to the pixel-centre frame.
  std::vector<Point> corners;
  corners.reserve(outline.size());
  for (const auto& v : outline) {
    corners.push_back({static_cast<double>(v[0] + minx) - 0.5, static_cast<double>(v[1] + miny) - 0.5});
  }
  const auto hull = convex_hull(corners);
  double hull_area = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    hull_area += a[0] * b[1] - b[0] * a[1];
  }
  hull_area = 0.5 * std::abs(hull_area);

  double best = -1;
  Point fa{}, fb{};
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      const double dx = hull[j][0] - hull[i][0], dy = hull[j][1] - hull[i][1];
      const double d2 = dx * dx + dy * dy;
      if (d2 > best) {
        best = d2;
        fa = hull[i];
        fb = hull[j];
      }
    }
  }
  if (fb[0] < fa[0] || (fb[0] == fa[0] && fb[1] < fa[1])) std::swap(fa, fb);
  r.feret = std::sqrt(best);
  r.feret_x = fa[0];
  r.feret_y = fa[1];
  r.feret_angle = axis_angle(fb[0] - fa[0], fb[1] - fa[1]);

  // Minimum caliper: some hull edge is flush with one jaw.
  double min_width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    double far = 0;
    for (const auto& p : hull) far = std::max(far, std::abs(cross(a, b, p)) / len);
    min_width = std::min(min_width, far);
  }
  r.min_feret = min_width;

  r.aspect_ratio = r.minor > 0 ? r.major / r.minor : 0.0;
  r.roundness = r.major > 0 ? 4.0 * n / (std::numbers::pi * r.major * r.major) : 0.0;
  r.compactness = r.major > 0 ? std::sqrt(4.0 * n / std::numbers::pi) / r.major : 0.0;
  r.solidity = n / hull_area;
  r.feret_ar = r.feret / r.min_feret;
  r.extent = n / static_cast<double>(w * h);
  return r;
}

std::vector<ObjectRecord2D> object_params_2d(const LabeledObjects& objects) {
  const Dims d = objects.labels.dims();
  require(d.depth == 1, ErrorCode::kDimMismatch, "2D parameters need a 2D label map");
  const auto px = object_pixels(objects);
  std::vector<ObjectRecord2D> out(objects.count);
  parallel_for(objects.count, [&](std::size_t k) {
    std::vector<std::array<std::int64_t, 2>> pts;
    pts.reserve(px[k].size());
    for (auto i : px[k]) {
      pts.push_back({static_cast<std::int64_t>(i % d.width), static_cast<std::int64_t>(i / d.width)});
    }
    out[k] = object_params_2d(pts);
    out[k].label = static_cast<std::uint32_t>(k + 1);
  });
  return out;
}

double param_value(const ObjectRecord2D& r, std::size_t param) {
  const double values[19] = {r.area,        r.x_cm,      r.y_cm,      r.perimeter, r.major,
                             r.minor,       r.angle,     r.circularity, r.feret,   r.feret_x,
                             r.feret_y,     r.feret_angle, r.min_feret, r.aspect_ratio,
                             r.roundness,   r.solidity,  r.feret_ar,  r.compactness, r.extent};
  require(param < 19, ErrorCode::kInvalidSpec, "2D parameter index out of range");
  return values[param];
}

bool is_angle_param(std::string_view name) { return name == "angle" || name == "feret_angle"; }

// ---- 3D parameters ----------------------------------------------------------

std::vector<ObjectRecord3D> object_params_3d(const LabeledObjects& objects, const VoxelSize& voxel) {
  const Dims d = objects.labels.dims();
  const auto& lab = objects.labels;
  std::vector<ObjectRecord3D> out(objects.count);
  std::vector<std::array<double, 3>> faces(objects.count, {0, 0, 0});  // per axis
  for (std::size_t z = 0; z < d.depth; ++z) {
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x) {
        const auto l = lab.at(x, y, z);
        if (!l) continue;
        auto& r = out[l - 1];
        r.volume += 1;
        r.x_cm += static_cast<double>(x);
        r.y_cm += static_cast<double>(y);
        r.z_cm += static_cast<double>(z);
        auto& f = faces[l - 1];
        f[0] += (x == 0 || lab.at(x - 1, y, z) != l) + (x + 1 == d.width || lab.at(x + 1, y, z) != l);
        f[1] += (y == 0 || lab.at(x, y - 1, z) != l) + (y + 1 == d.height || lab.at(x, y + 1, z) != l);
        f[2] += (z == 0 || lab.at(x, y, z - 1) != l) + (z + 1 == d.depth || lab.at(x, y, z + 1) != l);
      }
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& r = out[k];
    r.label = static_cast<std::uint32_t>(k + 1);
    r.x_cm /= r.volume;
    r.y_cm /= r.volume;
    r.z_cm /= r.volume;
    r.volume_um3 = r.volume * voxel.volume();
    r.surface_faces = faces[k][0] + faces[k][1] + faces[k][2];
    r.surface_um2 = faces[k][0] * voxel.y * voxel.z + faces[k][1] * voxel.x * voxel.z +
                    faces[k][2] * voxel.x * voxel.y;
  }
  return out;
}

double param_value(const ObjectRecord3D& r, std::size_t param) {
  const double values[7] = {r.volume, r.volume_um3, r.x_cm, r.y_cm, r.z_cm, r.surface_faces,
                            r.surface_um2};
  require(param < 7, ErrorCode::kInvalidSpec, "3D parameter index out of range");
  return values[param];
}

// ---- global parameters ------------------------------------------------------

GlobalParams global_params(const LabeledObjects& objects) {
  GlobalParams g;
  g.n_tot = static_cast<double>(objects.count);
  for (std::size_t i = 0; i < objects.labels.size(); ++i) g.a_tot += objects.labels[i] != 0;
  if (objects.labels.dims().depth > 1) {
    for (const auto& r : object_params_3d(objects, {})) g.sa_tot += r.surface_faces;
  }
  return g;
}

GlobalParams global_params(const LabeledObjects& plaques, const Mask& organ) {
  require(organ.dims() == plaques.labels.dims(), ErrorCode::kDimMismatch,
          "organ mask differs in dims from the plaque labels");
  GlobalParams g = global_params(plaques);
  PlaqueParams p;
  for (std::size_t i = 0; i < organ.size(); ++i) p.organ_volume += organ[i] != 0;
  require(p.organ_volume > 0, ErrorCode::kEmptyOrgan, "organ mask is empty");
  p.total_volume = g.a_tot;
  p.count = g.n_tot;
  p.load = p.total_volume / p.organ_volume;
  p.mean_volume = p.count > 0 ? p.total_volume / p.count : 0.0;
  g.plaque = p;
  return g;
}

// ---- export -----------------------------------------------------------------

void to_json(nlohmann::json& j, const ObjectRecord2D& r) {
  j = nlohmann::json::object();
  j["label"] = r.label;
  for (std::size_t p = 0; p < kObjectParams2D.size(); ++p) {
    j[std::string(kObjectParams2D[p])] = param_value(r, p);
  }
  j["degenerate"] = r.degenerate;
}

void to_json(nlohmann::json& j, const ObjectRecord3D& r) {
  j = nlohmann::json::object();
  j["label"] = r.label;
  for (std::size_t p = 0; p < kObjectParams3D.size(); ++p) {
    j[std::string(kObjectParams3D[p])] = param_value(r, p);
  }
}

void to_json(nlohmann::json& j, const GlobalParams& g) {
  j = {{"n_tot", g.n_tot}, {"a_tot", g.a_tot}, {"sa_tot", g.sa_tot}};
  if (g.plaque) {
    j["plaque"] = {{"total_volume", g.plaque->total_volume},
                   {"load", g.plaque->load},
                   {"count", g.plaque->count},
                   {"mean_volume", g.plaque->mean_volume},
                   {"organ_volume", g.plaque->organ_volume}};
  }
}

namespace {

template <typename Record, std::size_t N>
void write_csv(const std::vector<Record>& records, const std::array<std::string_view, N>& names,
               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << "label";
  for (auto n : names) out << ',' << n;
  out << '\n';
  char buf[32];
  for (const auto& r : records) {
    out << r.label;
    for (std::size_t p = 0; p < N; ++p) {
      std::snprintf(buf, sizeof buf, "%.10g", param_value(r, p));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace

void write_objects_csv(const std::vector<ObjectRecord2D>& records, const std::filesystem::path& path) {
  write_csv(records, kObjectParams2D, path);
}

void write_objects_csv(const std::vector<ObjectRecord3D>& records, const std::filesystem::path& path) {
  write_csv(records, kObjectParams3D, path);
}

}  // namespace rawscore
