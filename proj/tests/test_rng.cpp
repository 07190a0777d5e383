#include <gtest/gtest.h>

#include <numeric>
#include <vector>

#include "mmda/rng.hpp"

namespace mmda {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiverge) {
  Rng a(1), b(2);
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformIndexStaysInRange) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, Uniform01HalfOpen) {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BetaMomentsMatchClosedForm) {
  // Beta(a, b): mean a / (a + b), variance ab / ((a + b)^2 (a + b + 1)).
  Rng rng(5);
  const double a = 0.75, b = 0.75;
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta(a, b);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 0.005);
  EXPECT_NEAR(var, a * b / ((a + b) * (a + b) * (a + b + 1)), 0.003);
}

TEST(Rng, SerializeRoundTripContinuesStream) {
  Rng a(9);
  for (int i = 0; i < 17; ++i) a.next_u64();
  Rng b = Rng::deserialize(a.serialize());
  EXPECT_TRUE(a == b);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsAreIndependentOfEachOther) {
  Rng parent(10);
  Rng x = parent.derive(1);
  Rng y = parent.derive(1);
  EXPECT_NE(x.next_u64(), y.next_u64());
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(11);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

}  // namespace
}  // namespace mmda
