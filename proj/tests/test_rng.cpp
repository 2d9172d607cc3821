#include <gtest/gtest.h>

#include "taanp/rng.hpp"

using taanp::RngStream;

TEST(Rng, SameSeedAndStreamReproducesExactly) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  RngStream ga(42, 7), gb(42, 7);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(ga.gaussian(), gb.gaussian());
}

TEST(Rng, DistinctStreamsDiffer) {
  RngStream a(42, 1), b(42, 2), c(43, 1);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t x = a.next_u64();
    if (x == b.next_u64()) ++same_ab;
    if (x == c.next_u64()) ++same_ac;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(Rng, UniformInUnitInterval) {
  RngStream r(1, 1);
  double mn = 1.0, mx = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    sum += u;
  }
  EXPECT_GE(mn, 0.0);
  EXPECT_LT(mx, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, GaussianMoments) {
  RngStream r(5, 9);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = r.gaussian();
    sum += g;
    sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, BelowIsUnbiasedEnough) {
  RngStream r(11, 3);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) counts[r.below(5)]++;
  for (int c : counts) EXPECT_NEAR(c, n / 5.0, 0.05 * n / 5.0);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  RngStream r(3, 3);
  auto pick = r.sample_without_replacement(20, 12);
  std::sort(pick.begin(), pick.end());
  for (std::size_t i = 1; i < pick.size(); ++i)
    ASSERT_NE(pick[i - 1], pick[i]);
  EXPECT_EQ(pick.size(), 12u);
}
