#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "paraug/loss.hpp"
#include "testing.hpp"

using namespace paraug;

namespace {

struct Instance {
  WeightedTargets t;
  Matrix<double> p;
};

Instance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t m, bool binary_only = false) {
  std::uniform_int_distribution<int> lab(0, 4);
  std::uniform_real_distribution<double> prob(0.05, 0.95), w(0.0, 1.0);
  Instance x{{Matrix<Label>(n, m), w(rng)}, Matrix<double>(n, m)};
  const Label alphabet[] = {-1, 0, 1, 2, 3};
  for (auto& v : x.t.targets.data()) v = binary_only ? Label(lab(rng) % 2) : alphabet[lab(rng)];
  for (auto& v : x.p.data()) v = prob(rng);
  return x;
}

// Standard mean binary cross-entropy over all entries, per image then averaged.
double plain_bce(const Matrix<Label>& y, const Matrix<double>& p) {
  double total = 0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double s = 0;
    for (std::size_t m = 0; m < y.cols(); ++m) s += y(i, m) ? std::log(p(i, m)) : std::log(1 - p(i, m));
    total += -s / double(y.cols());
  }
  return total / double(y.rows());
}

}  // namespace

TEST(Loss, Examples) {
  WeightedTargets t{Matrix<Label>{{1}}, 0.5};
  EXPECT_NEAR(bce_augmented(t, Matrix<double>{{0.5}}).mean, 0.693147, 1e-6);
  t.targets = Matrix<Label>{{-1}};
  EXPECT_EQ(bce_augmented(t, Matrix<double>{{0.123}}).mean, 0.0);
  t.targets = Matrix<Label>{{3, 0}};
  EXPECT_NEAR(bce_augmented(t, Matrix<double>{{0.5, 0.5}}).mean, 0.519860, 1e-6);
}

TEST(Loss, ReducesToStandardBce) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    auto x = random_instance(rng, 7, 5, true);
    EXPECT_NEAR(bce_augmented(x.t, x.p).mean, plain_bce(x.t.targets, x.p), 1e-12);
  }
}

TEST(Loss, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    auto x = random_instance(rng, 4, 6);
    const auto g = bce_augmented_grad(x.t, x.p);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t m = 0; m < 6; ++m) {
        const double h = 1e-6;
        auto up = x.p, dn = x.p;
        up(i, m) += h;
        dn(i, m) -= h;
        const double fd = (bce_augmented(x.t, up).per_image[i] - bce_augmented(x.t, dn).per_image[i]) / (2 * h);
        if (g(i, m) == 0) {
          EXPECT_NEAR(fd, 0.0, 1e-9);
        } else {
          EXPECT_LT(std::abs(fd - g(i, m)) / std::abs(g(i, m)), 1e-5) << k << " " << i << "," << m;
        }
      }
  }
}

TEST(Loss, GradientExamples) {
  WeightedTargets t{Matrix<Label>{{1}}, 0.5};
  EXPECT_DOUBLE_EQ(bce_augmented_grad(t, Matrix<double>{{0.5}})(0, 0), -2.0);
  t.targets = Matrix<Label>{{-1, -1}};
  const auto g = bce_augmented_grad(t, Matrix<double>{{0.3, 0.9}});
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_EQ(g(0, 1), 0.0);
}

TEST(Loss, IgnoredEntriesContributeNothing) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    auto x = random_instance(rng, 5, 5);
    const auto base = bce_augmented(x.t, x.p);
    const auto g = bce_augmented_grad(x.t, x.p);
    auto moved = x.p;
    for (std::size_t i = 0; i < 25; ++i)
      if (x.t.targets.data()[i] == -1) {
        EXPECT_EQ(g.data()[i], 0.0);
        moved.data()[i] = 0.999 - moved.data()[i] * 0.5;
      }
    EXPECT_EQ(bce_augmented(x.t, moved).per_image, base.per_image);
  }
}

TEST(Loss, AffineInWeightAugmented) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    auto x = random_instance(rng, 6, 4);
    auto at = [&](double w) {
      auto t = x.t;
      t.weight_augmented = w;
      return bce_augmented(t, x.p).mean;
    };
    const double l0 = at(0), l5 = at(0.5), l1 = at(1);
    EXPECT_NEAR(l5 - l0, l1 - l5, 1e-12);
    double slope = 0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t m = 0; m < 4; ++m)
        if (x.t.targets(i, m) == 3) slope += -std::log(x.p(i, m)) / 4.0 / 6.0;
    EXPECT_NEAR(l1 - l0, slope, 1e-12);
  }
}

TEST(Loss, MonotoneInPositiveProbability) {
  WeightedTargets t{Matrix<Label>{{1}}, 0.5};
  double prev = INFINITY;
  for (double p = 0.01; p < 1; p += 0.01) {
    const double l = bce_augmented(t, Matrix<double>{{p}}).mean;
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Loss, ClampingAndErrors) {
  WeightedTargets t{Matrix<Label>{{1, 0}}, 0.5};
  const auto v = bce_augmented(t, Matrix<double>{{0.0, 1.0}});
  EXPECT_TRUE(std::isfinite(v.mean));
  EXPECT_NEAR(v.mean, -std::log(1e-7), 1e-6);
  EXPECT_THROW(bce_augmented(t, Matrix<double>{{0.5}}), ValidationError);
  EXPECT_THROW(bce_augmented(t, Matrix<double>{{NAN, 0.5}}), ValidationError);
}

TEST(Export, MappingAndWeights) {
  DatasetManifest m{AttributeSchema({"a", "b", "c"}),
                    {{"r", "p", Split::train, Origin::real, {0, 1, 2}, {}},
                     {"s", "q", Split::train, Origin::synthetic, {-1, 1, 3}, std::string("b")},
                     {"t", "z", Split::test, Origin::real, {1, 1, 1}, {}}},
                    "x"};
  const auto rows = weight_rows(m, 0.5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].targets, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(rows[0].weights, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(rows[1].targets, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(rows[1].weights, (std::vector<double>{0, 1, 0.5}));
  EXPECT_EQ(format_weight_matrix(m.schema, rows), "id,t:a,t:b,t:c,w:a,w:b,w:c\nr,0,1,1,1,1,1\ns,0,1,1,0,1,0.5\n");
}

TEST(Export, AllRealGivesUnitWeights) {
  const auto m = fx::manifest_from_counts({{"x", 0, 0, 3, 10}, {"y", 0, 0, 7, 10}});
  for (double w : {0.0, 0.3, 1.0})
    for (const auto& r : weight_rows(m, w))
      for (double v : r.weights) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(weight_rows(m, 1.5), ValidationError);
}
