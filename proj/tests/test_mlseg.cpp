#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rawscore/imgio.hpp"
#include "rawscore/mlseg.hpp"

using namespace rawscore;

namespace {

RealImage from_fn(Dims d, double (*f)(double, double)) {
  RealImage img(d);
  for (std::size_t y = 0; y < d.height; ++y)
    for (std::size_t x = 0; x < d.width; ++x) img.at(x, y) = f(double(x), double(y));
  return img;
}

}  // namespace

TEST(Kernel, SmoothingSumsToOne) {
  for (double s : {0.7, 1.0, 2.5}) {
    const auto k = gaussian_kernel(s, 0);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(k.size() % 2, 1u);
    EXPECT_EQ(k.size() / 2, static_cast<std::size_t>(std::ceil(4 * s)));
  }
}

TEST(Kernel, DerivativesNormalizedOnPolynomials) {
  for (double s : {0.7, 1.6, 3.5}) {
    const auto k1 = gaussian_kernel(s, 1);
    const auto k2 = gaussian_kernel(s, 2);
    const auto r = static_cast<std::ptrdiff_t>(k1.size() / 2);
    double ramp = 0, parabola = 0, constant = 0;
    for (std::ptrdiff_t i = -r; i <= r; ++i) {
      // Correlation with the kernel: response at 0 of f(x) = x and x^2/2.
      ramp += k1[static_cast<std::size_t>(r - i)] * double(i);
      parabola += k2[static_cast<std::size_t>(r - i)] * 0.5 * double(i * i);
      constant += k2[static_cast<std::size_t>(r - i)];
    }
    EXPECT_NEAR(std::abs(ramp), 1.0, 1e-9) << s;
    EXPECT_NEAR(parabola, 1.0, 1e-9) << s;
    EXPECT_NEAR(constant, 0.0, 1e-9) << s;
  }
}

TEST(Filter, DerivativesOfPolynomialImage) {
  const Dims d{40, 40, 1};
  const auto ramp = from_fn(d, [](double x, double) { return 3.0 * x; });
  const auto gx = gaussian_derivative(ramp, 1.5, {1, 0, 0});
  EXPECT_NEAR(gx.at(20, 20), 3.0, 1e-9);
  const auto par = from_fn(d, [](double, double y) { return 0.5 * y * y; });
  const auto gyy = gaussian_derivative(par, 1.5, {0, 2, 0});
  EXPECT_NEAR(gyy.at(20, 20), 1.0, 1e-9);
  const auto flat = from_fn(d, [](double, double) { return 7.0; });
  const auto sm = gaussian_filter(flat, 2.0);
  for (auto v : sm.values()) EXPECT_NEAR(v, 7.0, 1e-12);  // reflection keeps constants
}

TEST(Recipe, FeatureCountAndNames) {
  FeatureRecipe r;
  r.sigmas = {1.0, 2.0};
  r.kinds = {FeatureKind::kRawIntensity, FeatureKind::kGaussian, FeatureKind::kHessianEigenvalues};
  r.dimensionality = 2;
  EXPECT_EQ(r.feature_count(), 1u + 2u + 4u);
  EXPECT_EQ(r.feature_names().size(), r.feature_count());
  r.dimensionality = 3;
  EXPECT_EQ(r.feature_count(), 1u + 2u + 6u);
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<FeatureRecipe>(), r);
  for (auto k : r.kinds) EXPECT_EQ(feature_kind_from_string(to_string(k)), k);
  r.sigmas.clear();
  EXPECT_THROW(r.validate(), Error);
}

class ForestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    spec.count = 4;
    spec.radius = 8;
    spec.background = 500;
    spec.foreground = 3000;
    spec.seed = 2;
    phantom = generate_phantom(spec);
    class_map = LabelMap(phantom.truth.dims());
    for (std::size_t i = 0; i < class_map.size(); ++i) class_map[i] = phantom.truth[i] > 0;
    recipe.sigmas = {1.0, 2.0};
    recipe.kinds = {FeatureKind::kRawIntensity, FeatureKind::kGaussian,
                    FeatureKind::kGradientMagnitude};
    features = compute_features(phantom.image, recipe);
    scribbles = sample_scribbles(class_map, {"background", "object"}, 60, 4);
    options.n_trees = 10;
    options.seed = 5;
  }

  Phantom phantom;
  LabelMap class_map;
  FeatureRecipe recipe;
  FeatureStack features;
  LabelScribbles scribbles;
  TrainOptions options;
};

TEST_F(ForestTest, ScribblesAreBalancedAndInside) {
  std::size_t per[2] = {0, 0};
  for (const auto& [i, c] : scribbles.samples) {
    ASSERT_LT(i, class_map.size());
    EXPECT_EQ(class_map[i], c);
    ++per[c];
  }
  EXPECT_EQ(per[0], 60u);
  EXPECT_EQ(per[1], 60u);
}

TEST_F(ForestTest, DeterministicAndSerializable) {
  const auto a = train_classifier(features, scribbles, recipe, options);
  const auto b = train_classifier(features, scribbles, recipe, options);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.trees.size(), 10u);
  const nlohmann::json j = a;
  EXPECT_EQ(j.get<PixelClassifier>(), a);
  EXPECT_EQ(a.hash(), j.get<PixelClassifier>().hash());
  auto other = options;
  other.seed = 6;
  EXPECT_NE(train_classifier(features, scribbles, recipe, other).hash(), a.hash());
}

TEST_F(ForestTest, SeparatesEasyScene) {
  const auto clf = train_classifier(features, scribbles, recipe, options);
  const auto proba = predict_proba(clf, phantom.image);
  ASSERT_EQ(proba.n_classes, 2u);
  std::size_t correct = 0;
  for (std::size_t p = 0; p < proba.dims.count(); ++p) {
    EXPECT_NEAR(proba.at(p, 0) + proba.at(p, 1), 1.0, 1e-12);
    correct += (proba.at(p, 1) >= 0.5) == (class_map[p] == 1);
  }
  EXPECT_GT(double(correct) / proba.dims.count(), 0.97);
  const auto mask = threshold_mask(proba, 1, 0.5);
  for (std::size_t p = 0; p < mask.size(); ++p) EXPECT_EQ(mask[p], proba.at(p, 1) >= 0.5);
}

TEST_F(ForestTest, RecipeMismatchRejected) {
  const auto clf = train_classifier(features, scribbles, recipe, options);
  FeatureRecipe other = recipe;
  other.sigmas = {3.0};
  const auto f2 = compute_features(phantom.image, other);
  try {
    predict_proba(clf, f2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRecipeMismatch);
  }
}

TEST_F(ForestTest, SingleClassScribblesAreDegenerate) {
  LabelScribbles one;
  one.classes = {"background", "object"};
  for (const auto& s : scribbles.samples) {
    if (s.second == 0) one.samples.push_back(s);
  }
  try {
    train_classifier(features, one, recipe, options);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateLabels);
  }
}

TEST_F(ForestTest, TreeStructureInvariants) {
  const auto clf = train_classifier(features, scribbles, recipe, options);
  for (const auto& tree : clf.trees) {
    std::vector<std::uint64_t> reach(tree.nodes.size(), 0);
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) {
        ASSERT_EQ(node.counts.size(), 2u);
        EXPECT_GE(node.counts[0] + node.counts[1], 1u);
        continue;
      }
      EXPECT_LT(static_cast<std::size_t>(node.feature), clf.n_features);
      ASSERT_GE(node.left, 0);
      ASSERT_GE(node.right, 0);
      ASSERT_LT(static_cast<std::size_t>(node.left), tree.nodes.size());
      ASSERT_LT(static_cast<std::size_t>(node.right), tree.nodes.size());
    }
    // Bootstrap size equals the scribble count: leaf histograms add up to it.
    std::uint64_t total = 0;
    for (const auto& node : tree.nodes)
      if (node.feature < 0) total += node.counts[0] + node.counts[1];
    EXPECT_EQ(total, scribbles.samples.size());
  }
}

TEST_F(ForestTest, SingleTreePureLeafIsCertain) {
  auto one = options;
  one.n_trees = 1;
  one.min_leaf = 1;
  const auto clf = train_classifier(features, scribbles, recipe, one);
  const auto proba = predict_proba(clf, features);
  const auto& tree = clf.trees[0];
  for (std::size_t p = 0; p < proba.dims.count(); p += 97) {
    // Walk the tree by hand and compare with the reported probability.
    std::int32_t k = 0;
    while (tree.nodes[k].feature >= 0) {
      const auto& n = tree.nodes[k];
      k = features.at(p, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right;
    }
    const auto& c = tree.nodes[k].counts;
    const double expect = double(c[1]) / double(c[0] + c[1]);
    EXPECT_DOUBLE_EQ(proba.at(p, 1), expect);
    if (c[0] == 0) EXPECT_EQ(proba.at(p, 1), 1.0);
  }
}
