#include <gtest/gtest.h>

#include <cmath>

#include "tea/rng.hpp"
#include "tea/tensor.hpp"

using namespace tea;

TEST(Tensor, ShapeDataAgreement) {
  Tensor<float> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>({0, 3}), ShapeError);
}

TEST(Tensor, ReshapePreservesCount) {
  Tensor<float> t({2, 6}, 1.0f);
  auto r = t.reshaped({3, 4});
  EXPECT_EQ(r.shape, (Shape{3, 4}));
  EXPECT_THROW(t.reshaped({5, 2}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
  Tensor<double> t({2}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(Rng, DeterministicAcrossInstances) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(42, 8);
  EXPECT_NE(a.next_u64(), c.next_u64());
}

TEST(Rng, ForkIndependentOfParentCounter) {
  RngStream a(1, 2);
  RngStream f1 = a.fork(5);
  a.next_u64();
  a.next_u64();
  RngStream f2 = a.fork(5);
  EXPECT_EQ(f1.next_u64(), f2.next_u64());
}

TEST(Rng, UnitIntervalRange) {
  RngStream r(3, 0);
  for (int i = 0; i < 10000; ++i) {
    double u = r.next_unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, UniformMoments) {
  RngStream r(123, 0);
  const int n = 100000;
  double sum = 0, lo = 1e9, hi = -1e9;
  for (int i = 0; i < n; ++i) {
    double v = r.uniform(-1.0, 1.0);
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_GE(lo, -1.0);
  EXPECT_LE(hi, 1.0);
}

TEST(Rng, NormalMoments) {
  RngStream r(321, 0);
  const int n = 100000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Rng, NextBelowUnbiasedRange) {
  RngStream r(9, 9);
  for (int i = 0; i < 1000; ++i) {
    auto v = r.next_below(7);
    EXPECT_LT(v, 7u);
  }
}
