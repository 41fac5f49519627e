#include "rawscore/mlseg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "rawscore/parallel.hpp"
#include "rawscore/rng.hpp"

namespace rawscore {

// ---- filtering --------------------------------------------------------------

std::vector<double> gaussian_kernel(double sigma, int order) {
  require(sigma > 0, ErrorCode::kInvalidSpec, "gaussian sigma must be positive");
  require(order >= 0 && order <= 2, ErrorCode::kInvalidSpec, "derivative order must be 0..2");
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> g(2 * radius + 1);
  double sum = 0;
  for (int j = -radius; j <= radius; ++j) {
    g[j + radius] = std::exp(-0.5 * j * j / (sigma * sigma));
    sum += g[j + radius];
  }
  for (auto& v : g) v /= sum;
  if (order == 0) return g;

  std::vector<double> k(g.size());
  if (order == 1) {
    // out(x) = sum_j k(j) in(x - j); a unit ramp gives -sum_j j k(j) = 1.
    double m2 = 0;
    for (int j = -radius; j <= radius; ++j) m2 += j * j * g[j + radius];
    for (int j = -radius; j <= radius; ++j) k[j + radius] = -j * g[j + radius] / m2;
    return k;
  }
  // Zero-sum, and x^2/2 maps to sum_j j^2 k(j) / 2 = 1.
  double m2 = 0;
  for (int j = -radius; j <= radius; ++j) m2 += j * j * g[j + radius];
  double m4 = 0;
  for (int j = -radius; j <= radius; ++j) {
    k[j + radius] = (j * j - m2) * g[j + radius];
    m4 += static_cast<double>(j) * j * k[j + radius];
  }
  for (auto& v : k) v *= 2.0 / m4;
  return k;
}

namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

void convolve_axis(const std::vector<double>& in, std::vector<double>& out, const Dims& dims,
                   int axis, const std::vector<double>& kernel) {
  const std::size_t len = axis == 0 ? dims.width : axis == 1 ? dims.height : dims.depth;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? dims.width : dims.plane();
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const std::size_t lines = dims.count() / len;
  out.resize(in.size());
  const std::size_t blocks = std::min<std::size_t>(lines, 64);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t first = lines * b / blocks;
    const std::size_t last = lines * (b + 1) / blocks;
    std::vector<double> line(len + 2 * radius);
    for (std::size_t l = first; l < last; ++l) {
      std::size_t base;
      if (axis == 0) {
        base = l * len;
      } else if (axis == 1) {
        base = (l / dims.width) * dims.plane() + (l % dims.width);
      } else {
        base = l;
      }
      for (std::ptrdiff_t i = -radius; i < static_cast<std::ptrdiff_t>(len) + radius; ++i) {
        line[i + radius] = in[base + reflect(i, len) * stride];
      }
      for (std::size_t x = 0; x < len; ++x) {
        double acc = 0;
        // in(x - j) sits at line[x + radius - j].
        for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
          acc += kernel[j + radius] * line[x + radius - j];
        }
        out[base + x * stride] = acc;
      }
    }
  });
}

}  // namespace

RealImage gaussian_derivative(const RealImage& image, double sigma, std::array<int, 3> orders) {
  const Dims dims = image.dims();
  std::vector<double> cur = image.storage(), next;
  const int axes = dims.depth > 1 ? 3 : 2;
  for (int axis = 0; axis < axes; ++axis) {
    const std::size_t len = axis == 0 ? dims.width : axis == 1 ? dims.height : dims.depth;
    if (len <= 1 && orders[axis] == 0) continue;
    convolve_axis(cur, next, dims, axis, gaussian_kernel(sigma, orders[axis]));
    cur.swap(next);
  }
  return RealImage(dims, std::move(cur));
}

RealImage gaussian_filter(const RealImage& image, double sigma) {
  return gaussian_derivative(image, sigma, {0, 0, 0});
}

// ---- features ---------------------------------------------------------------

namespace {

constexpr std::pair<FeatureKind, const char*> kKindNames[] = {
    {FeatureKind::kRawIntensity, "raw_intensity"},
    {FeatureKind::kGaussian, "gaussian"},
    {FeatureKind::kGradientMagnitude, "gradient_magnitude"},
    {FeatureKind::kLaplacian, "laplacian"},
    {FeatureKind::kHessianEigenvalues, "hessian_eigenvalues"},
    {FeatureKind::kStructureTensorEigenvalues, "structure_tensor_eigenvalues"},
};

std::size_t width_of(FeatureKind kind, int dimensionality) {
  switch (kind) {
    case FeatureKind::kHessianEigenvalues:
    case FeatureKind::kStructureTensorEigenvalues:
      return static_cast<std::size_t>(dimensionality);
    default:
      return 1;
  }
}

std::string sigma_tag(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_s%g", s);
  return buf;
}

// Eigenvalues of a symmetric matrix in descending order.
void eigen2(double a, double b, double c, double* out) {
  const double m = 0.5 * (a + c);
  const double d = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  out[0] = m + d;
  out[1] = m - d;
}

void eigen3(const Eigen::Matrix3d& m, double* out) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(m, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  out[0] = ev(2);
  out[1] = ev(1);
  out[2] = ev(0);
}

}  // namespace

std::string to_string(FeatureKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  fail(ErrorCode::kInvalidSpec, "unknown feature kind '" + name + "'");
}

void FeatureRecipe::validate() const {
  require(!kinds.empty(), ErrorCode::kInvalidSpec, "feature recipe needs at least one kind");
  require(dimensionality == 2 || dimensionality == 3, ErrorCode::kInvalidSpec,
          "feature dimensionality must be 2 or 3");
  const bool needs_sigma = std::any_of(kinds.begin(), kinds.end(), [](FeatureKind k) {
    return k != FeatureKind::kRawIntensity;
  });
  require(!needs_sigma || !sigmas.empty(), ErrorCode::kInvalidSpec, "feature recipe needs sigmas");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    require(sigmas[i] > 0 && (i == 0 || sigmas[i] > sigmas[i - 1]), ErrorCode::kInvalidSpec,
            "sigmas must be positive and strictly increasing");
  }
}

std::size_t FeatureRecipe::feature_count() const { return feature_names().size(); }

std::vector<std::string> FeatureRecipe::feature_names() const {
  std::vector<std::string> names;
  if (std::find(kinds.begin(), kinds.end(), FeatureKind::kRawIntensity) != kinds.end()) {
    names.push_back("raw_intensity");
  }
  for (double s : sigmas) {
    for (FeatureKind k : kinds) {
      if (k == FeatureKind::kRawIntensity) continue;
      const std::size_t w = width_of(k, dimensionality);
      for (std::size_t e = 0; e < w; ++e) {
        std::string n = to_string(k);
        if (w > 1) n += std::to_string(e);
        names.push_back(n + sigma_tag(s));
      }
    }
  }
  return names;
}

std::string FeatureRecipe::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(nlohmann::json(*this).dump())));
  return buf;
}

void to_json(nlohmann::json& j, const FeatureRecipe& recipe) {
  std::vector<std::string> kinds;
  for (auto k : recipe.kinds) kinds.push_back(to_string(k));
  j = {{"sigmas", recipe.sigmas}, {"kinds", kinds}, {"dimensionality", recipe.dimensionality}};
}

void from_json(const nlohmann::json& j, FeatureRecipe& recipe) {
  recipe = FeatureRecipe{};
  if (j.contains("sigmas")) recipe.sigmas = j.at("sigmas").get<std::vector<double>>();
  if (j.contains("kinds")) {
    recipe.kinds.clear();
    for (const auto& k : j.at("kinds")) recipe.kinds.push_back(feature_kind_from_string(k));
  }
  if (j.contains("dimensionality")) recipe.dimensionality = j.at("dimensionality").get<int>();
  recipe.validate();
}

FeatureStack compute_features(const RealImage& image, const FeatureRecipe& recipe) {
  recipe.validate();
  const Dims dims = image.dims();
  if (recipe.dimensionality == 3) {
    require(dims.depth > 1, ErrorCode::kDimMismatch, "3D feature recipe applied to a 2D image");
  } else if (dims.depth > 1) {
    // 2D recipe on a volume: slice-wise features.
    FeatureStack out;
    out.dims = dims;
    out.n_features = recipe.feature_count();
    out.values.resize(dims.count() * out.n_features);
    const Dims plane{dims.width, dims.height, 1};
    for (std::size_t z = 0; z < dims.depth; ++z) {
      std::vector<double> v(image.storage().begin() + z * dims.plane(),
                            image.storage().begin() + (z + 1) * dims.plane());
      const auto f = compute_features(RealImage(plane, std::move(v)), recipe);
      std::copy(f.values.begin(), f.values.end(),
                out.values.begin() + static_cast<std::ptrdiff_t>(z * f.values.size()));
    }
    return out;
  }

  const bool is3 = recipe.dimensionality == 3;
  const std::size_t n = dims.count();
  FeatureStack out;
  out.dims = dims;
  out.n_features = recipe.feature_count();
  out.values.resize(n * out.n_features);
  std::size_t col = 0;
  auto put = [&](const std::vector<double>& v) {
    for (std::size_t p = 0; p < n; ++p) out.values[p * out.n_features + col] = static_cast<float>(v[p]);
    ++col;
  };
  auto has = [&](FeatureKind k) {
    return std::find(recipe.kinds.begin(), recipe.kinds.end(), k) != recipe.kinds.end();
  };
  if (has(FeatureKind::kRawIntensity)) put(image.storage());

  const bool need_grad = has(FeatureKind::kGradientMagnitude) ||
                         has(FeatureKind::kStructureTensorEigenvalues);
  const bool need_hess = has(FeatureKind::kLaplacian) || has(FeatureKind::kHessianEigenvalues);
  const int axes = is3 ? 3 : 2;
  for (double s : recipe.sigmas) {
    std::vector<RealImage> grad, hess;  // hess: xx, yy, zz, xy, xz, yz
    if (need_grad) {
      for (int a = 0; a < axes; ++a) {
        std::array<int, 3> o{0, 0, 0};
        o[a] = 1;
        grad.push_back(gaussian_derivative(image, s, o));
      }
    }
    if (need_hess) {
      const int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
      for (const auto& pr : pairs) {
        if (!is3 && (pr[0] == 2 || pr[1] == 2)) continue;
        std::array<int, 3> o{0, 0, 0};
        ++o[pr[0]];
        ++o[pr[1]];
        hess.push_back(gaussian_derivative(image, s, o));
      }
    }
    for (FeatureKind k : recipe.kinds) {
      std::vector<double> v(n);
      switch (k) {
        case FeatureKind::kRawIntensity:
          continue;
        case FeatureKind::kGaussian:
          put(gaussian_filter(image, s).storage());
          break;
        case FeatureKind::kGradientMagnitude:
          for (std::size_t p = 0; p < n; ++p) {
            double g2 = 0;
            for (const auto& g : grad) g2 += g[p] * g[p];
            v[p] = std::sqrt(g2);
          }
          put(v);
          break;
        case FeatureKind::kLaplacian:
          for (std::size_t p = 0; p < n; ++p) v[p] = hess[0][p] + hess[1][p] + (is3 ? hess[2][p] : 0.0);
          put(v);
          break;
        case FeatureKind::kHessianEigenvalues:
        case FeatureKind::kStructureTensorEigenvalues: {
          std::vector<RealImage> m;  // same component order as hess
          if (k == FeatureKind::kHessianEigenvalues) {
            m = hess;
          } else {
            const double outer = 0.5 * s;
            const int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
            for (const auto& pr : pairs) {
              if (!is3 && (pr[0] == 2 || pr[1] == 2)) continue;
              RealImage prod(dims);
              for (std::size_t p = 0; p < n; ++p) prod[p] = grad[pr[0]][p] * grad[pr[1]][p];
              m.push_back(gaussian_filter(prod, outer));
            }
          }
          std::vector<std::vector<double>> ev(axes, std::vector<double>(n));
          for (std::size_t p = 0; p < n; ++p) {
            double e[3];
            if (is3) {
              Eigen::Matrix3d t;
              t << m[0][p], m[3][p], m[4][p], m[3][p], m[1][p], m[5][p], m[4][p], m[5][p], m[2][p];
              eigen3(t, e);
            } else {
              eigen2(m[0][p], m[2][p], m[1][p], e);
            }
            for (int a = 0; a < axes; ++a) ev[a][p] = e[a];
          }
          for (const auto& e : ev) put(e);
          break;
        }
      }
    }
  }
  return out;
}

FeatureStack compute_features(const ImageStack& stack, const FeatureRecipe& recipe) {
  return compute_features(to_real(stack), recipe);
}

RealImage feature_image(const FeatureStack& features, std::size_t feature) {
  require(feature < features.n_features, ErrorCode::kRecipeMismatch, "feature index out of range");
  RealImage out(features.dims);
  for (std::size_t p = 0; p < features.pixels(); ++p) out[p] = features.at(p, feature);
  return out;
}

// ---- scribbles --------------------------------------------------------------

LabelScribbles sample_scribbles(const LabelMap& class_map, std::vector<std::string> classes,
                                std::size_t per_class, std::uint64_t seed, bool avoid_edges) {
  const Dims d = class_map.dims();
  auto interior = [&](std::size_t x, std::size_t y, std::size_t z) {
    const auto c = class_map.at(x, y, z);
    if (x > 0 && class_map.at(x - 1, y, z) != c) return false;
    if (x + 1 < d.width && class_map.at(x + 1, y, z) != c) return false;
    if (y > 0 && class_map.at(x, y - 1, z) != c) return false;
    if (y + 1 < d.height && class_map.at(x, y + 1, z) != c) return false;
    if (z > 0 && class_map.at(x, y, z - 1) != c) return false;
    if (z + 1 < d.depth && class_map.at(x, y, z + 1) != c) return false;
    return true;
  };
  std::vector<std::vector<std::size_t>> all(classes.size()), inner(classes.size());
  for (std::size_t z = 0; z < d.depth; ++z) {
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x) {
        const auto c = class_map.at(x, y, z);
        if (c >= classes.size()) continue;
        const std::size_t i = d.index(x, y, z);
        all[c].push_back(i);
        if (avoid_edges && interior(x, y, z)) inner[c].push_back(i);
      }
    }
  }
  LabelScribbles s;
  s.classes = std::move(classes);
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    auto& pool = avoid_edges && !inner[c].empty() ? inner[c] : all[c];
    PhiloxEngine rng(seed, c);
    const std::size_t take = std::min(per_class, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      s.samples.emplace_back(pool[i], static_cast<std::uint32_t>(c));
    }
  }
  return s;
}

// ---- random forest ----------------------------------------------------------

namespace {

struct TrainingSet {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<float> x;  // sample-major
  std::vector<std::uint32_t> y;

  float at(std::size_t s, std::size_t f) const { return x[s * n_features + f]; }
};

struct SplitChoice {
  std::int32_t feature = -1;
  float threshold = 0;
  double score = -1;  // sum over children of sum_c n_c^2 / n
};

DecisionTree grow_tree(const TrainingSet& data, const TrainOptions& opt, std::size_t mtry,
                       std::uint64_t tree_index) {
  PhiloxEngine rng(opt.seed, tree_index);
  const std::size_t n = data.y.size();
  std::vector<std::uint32_t> idx(n);
  for (auto& i : idx) i = static_cast<std::uint32_t>(rng.below(n));
  std::sort(idx.begin(), idx.end());

  DecisionTree tree;
  struct Work {
    std::size_t node, begin, end;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, n});
  std::vector<std::uint32_t> features(data.n_features);
  std::vector<std::pair<float, std::uint32_t>> column;
  std::vector<std::uint32_t> left(data.n_classes), total(data.n_classes);

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    std::fill(total.begin(), total.end(), 0);
    for (std::size_t i = w.begin; i < w.end; ++i) ++total[data.y[idx[i]]];
    const std::size_t count = w.end - w.begin;
    const bool pure = std::count_if(total.begin(), total.end(), [](auto c) { return c > 0; }) <= 1;

    SplitChoice best;
    if (!pure && count >= 2 * opt.min_leaf) {
      std::iota(features.begin(), features.end(), 0u);
      for (std::size_t k = 0; k < data.n_features; ++k) {
        if (k >= mtry && best.feature >= 0) break;
        std::swap(features[k], features[k + rng.below(data.n_features - k)]);
        const std::uint32_t f = features[k];
        column.clear();
        for (std::size_t i = w.begin; i < w.end; ++i) {
          column.emplace_back(data.at(idx[i], f), data.y[idx[i]]);
        }
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) continue;
        std::fill(left.begin(), left.end(), 0);
        double sl = 0, sr = 0;  // sum of squared counts per side
        for (auto c : total) sr += static_cast<double>(c) * c;
        for (std::size_t i = 0; i + 1 < count; ++i) {
          const auto c = column[i].second;
          const double lc = left[c], rc = total[c] - left[c];
          sl += 2 * lc + 1;
          sr -= 2 * rc - 1;
          ++left[c];
          const std::size_t nl = i + 1, nr = count - nl;
          if (column[i].first == column[i + 1].first) continue;
          if (nl < opt.min_leaf || nr < opt.min_leaf) continue;
          const double score = sl / static_cast<double>(nl) + sr / static_cast<double>(nr);
          if (score > best.score + 1e-12) {
            float thr = static_cast<float>(0.5 * (static_cast<double>(column[i].first) +
                                                  column[i + 1].first));
            if (!(thr >= column[i].first && thr < column[i + 1].first)) thr = column[i].first;
            best = {static_cast<std::int32_t>(f), thr, score};
          }
        }
      }
    }

    if (best.feature < 0) {
      tree.nodes[w.node].counts = total;
      continue;
    }
    const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(w.begin),
                                    idx.begin() + static_cast<std::ptrdiff_t>(w.end),
                                    [&](std::uint32_t s) {
                                      return data.at(s, static_cast<std::size_t>(best.feature)) <=
                                             best.threshold;
                                    });
    const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
    const auto l = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[w.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = l + 1;
    // Right first so the left subtree is expanded next (depth-first, left to right).
    stack.push_back({static_cast<std::size_t>(l + 1), split, w.end});
    stack.push_back({static_cast<std::size_t>(l), w.begin, split});
  }
  return tree;
}

const std::vector<std::uint32_t>& leaf_of(const DecisionTree& tree, const float* x) {
  std::size_t n = 0;
  while (tree.nodes[n].feature >= 0) {
    const auto& node = tree.nodes[n];
    n = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return tree.nodes[n].counts;
}

}  // namespace

PixelClassifier train_classifier(const FeatureStack& features, const LabelScribbles& scribbles,
                                 const FeatureRecipe& recipe, const TrainOptions& options) {
  require(options.n_trees >= 1, ErrorCode::kInvalidSpec, "forest needs at least one tree");
  require(options.min_leaf >= 1, ErrorCode::kInvalidSpec, "min leaf must be at least 1");
  require(features.n_features == recipe.feature_count(), ErrorCode::kRecipeMismatch,
          "feature stack does not match the recipe");
  const std::size_t n_classes = scribbles.classes.size();
  std::vector<std::size_t> per_class(n_classes, 0);
  TrainingSet data;
  data.n_features = features.n_features;
  data.n_classes = n_classes;
  for (const auto& [pixel, cls] : scribbles.samples) {
    require(pixel < features.pixels(), ErrorCode::kInvalidSpec, "scribble outside the image");
    require(cls < n_classes, ErrorCode::kInvalidSpec, "scribble class id out of range");
    ++per_class[cls];
    data.y.push_back(cls);
    const float* row = features.values.data() + pixel * features.n_features;
    data.x.insert(data.x.end(), row, row + features.n_features);
  }
  const auto present = std::count_if(per_class.begin(), per_class.end(), [](auto c) { return c > 0; });
  require(present >= 2, ErrorCode::kDegenerateLabels, "scribbles cover fewer than two classes");
  require(present == static_cast<std::ptrdiff_t>(n_classes), ErrorCode::kDegenerateLabels,
          "every class needs at least one scribble");

  const std::size_t mtry = options.mtry ? std::min(options.mtry, data.n_features)
                                        : std::max<std::size_t>(1, static_cast<std::size_t>(
                                              std::floor(std::sqrt(double(data.n_features)))));
  PixelClassifier c;
  c.recipe = recipe;
  c.classes = scribbles.classes;
  c.train_seed = options.seed;
  c.n_features = data.n_features;
  c.trees.resize(options.n_trees);
  parallel_for(options.n_trees, [&](std::size_t t) { c.trees[t] = grow_tree(data, options, mtry, t); });
  return c;
}

ProbabilityMap predict_proba(const PixelClassifier& classifier, const FeatureStack& features) {
  require(features.n_features == classifier.n_features, ErrorCode::kRecipeMismatch,
          "feature count differs from the trained classifier");
  ProbabilityMap out;
  out.dims = features.dims;
  out.n_classes = classifier.classes.size();
  const std::size_t n = features.pixels();
  out.values.assign(n * out.n_classes, 0.0);
  const double per_tree = 1.0 / static_cast<double>(classifier.trees.size());
  constexpr std::size_t kBlock = 4096;
  parallel_for((n + kBlock - 1) / kBlock, [&](std::size_t b) {
    for (std::size_t p = b * kBlock; p < std::min(n, (b + 1) * kBlock); ++p) {
      const float* x = features.values.data() + p * features.n_features;
      double* prob = out.values.data() + p * out.n_classes;
      for (const auto& tree : classifier.trees) {
        const auto& counts = leaf_of(tree, x);
        double sum = 0;
        for (auto c : counts) sum += c;
        for (std::size_t c = 0; c < out.n_classes; ++c) prob[c] += per_tree * counts[c] / sum;
      }
    }
  });
  return out;
}

ProbabilityMap predict_proba(const PixelClassifier& classifier, const ImageStack& stack) {
  return predict_proba(classifier, compute_features(stack, classifier.recipe));
}

Mask threshold_mask(const ProbabilityMap& proba, std::size_t cls, double threshold) {
  require(cls < proba.n_classes, ErrorCode::kInvalidSpec, "class id out of range");
  Mask m(proba.dims);
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = proba.at(p, cls) >= threshold ? 1 : 0;
  return m;
}

RealImage probability_image(const ProbabilityMap& proba, std::size_t cls) {
  require(cls < proba.n_classes, ErrorCode::kInvalidSpec, "class id out of range");
  RealImage img(proba.dims);
  for (std::size_t p = 0; p < img.size(); ++p) img[p] = proba.at(p, cls);
  return img;
}

// ---- serialization ----------------------------------------------------------

void to_json(nlohmann::json& j, const PixelClassifier& c) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : c.trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   counts = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      counts.push_back(n.counts);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left},
                     {"right", right}, {"counts", counts}});
  }
  j = {{"format", "rawscore-classifier"}, {"version", 1},        {"recipe", c.recipe},
       {"classes", c.classes},            {"train_seed", c.train_seed},
       {"n_features", c.n_features},      {"trees", trees}};
}

void from_json(const nlohmann::json& j, PixelClassifier& c) {
  require(j.value("format", "") == "rawscore-classifier" && j.value("version", 0) == 1,
          ErrorCode::kUnsupportedFormat, "not a version-1 classifier document");
  c.recipe = j.at("recipe").get<FeatureRecipe>();
  c.classes = j.at("classes").get<std::vector<std::string>>();
  c.train_seed = j.at("train_seed").get<std::uint64_t>();
  c.n_features = j.at("n_features").get<std::size_t>();
  require(c.n_features == c.recipe.feature_count(), ErrorCode::kRecipeMismatch,
          "classifier feature count disagrees with its recipe");
  c.trees.clear();
  for (const auto& jt : j.at("trees")) {
    DecisionTree t;
    const auto& f = jt.at("feature");
    const std::size_t nodes = f.size();
    for (const char* key : {"threshold", "left", "right", "counts"}) {
      require(jt.at(key).size() == nodes, ErrorCode::kCorruptFile, "ragged tree arrays");
    }
    t.nodes.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      auto& n = t.nodes[i];
      n.feature = f[i].get<std::int32_t>();
      n.threshold = jt.at("threshold")[i].get<float>();
      n.left = jt.at("left")[i].get<std::int32_t>();
      n.right = jt.at("right")[i].get<std::int32_t>();
      n.counts = jt.at("counts")[i].get<std::vector<std::uint32_t>>();
      if (n.feature < 0) {
        require(n.counts.size() == c.classes.size(), ErrorCode::kCorruptFile,
                "leaf histogram size differs from class count");
        require(std::accumulate(n.counts.begin(), n.counts.end(), 0ull) > 0, ErrorCode::kCorruptFile,
                "empty leaf histogram");
      } else {
        const auto in_range = [&](std::int32_t k) {
          return k > static_cast<std::int32_t>(i) && k < static_cast<std::int32_t>(nodes);
        };
        require(static_cast<std::size_t>(n.feature) < c.n_features && in_range(n.left) &&
                    in_range(n.right),
                ErrorCode::kCorruptFile, "tree node references are out of range");
      }
    }
    c.trees.push_back(std::move(t));
  }
  require(!c.trees.empty(), ErrorCode::kCorruptFile, "classifier has no trees");
}

std::string PixelClassifier::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(nlohmann::json(*this).dump())));
  return buf;
}

PixelClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open classifier " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kCorruptFile, "classifier is not valid JSON");
  return j.get<PixelClassifier>();
}

void save_classifier(const PixelClassifier& classifier, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << nlohmann::json(classifier).dump() << '\n';
}

}  // namespace rawscore
