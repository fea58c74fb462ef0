#include <gtest/gtest.h>

#include <set>

#include "advsearch/random.hpp"

using namespace advsearch;

TEST(Random, DeriveSeedIsDeterministicAndDistinct) {
  const RandomSeed m{42};
  EXPECT_EQ(derive_seed(m, 7), derive_seed(m, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(m, i).value);
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(RandomSeed{1}, 0), derive_seed(RandomSeed{2}, 0));
}

TEST(Random, CopiedRngReplays) {
  Rng a(RandomSeed{5});
  a.next_u64();
  Rng b = a;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Random, ForkDependsOnlyOnSeedAndStream) {
  Rng a(RandomSeed{9});
  Rng f1 = a.fork(3);
  a.next_u64();
  Rng f2 = a.fork(3);
  EXPECT_EQ(f1.next_u64(), f2.next_u64());
}

TEST(Random, UniformIsInOpenInterval) {
  EXPECT_GT(bits_to_open_unit(0), 0.0);
  EXPECT_LT(bits_to_open_unit(~std::uint64_t{0}), 1.0);
  Rng r(RandomSeed{1});
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Random, UniformIndexCoversRangeEvenly) {
  Rng r(RandomSeed{2});
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[r.uniform_index(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
}

TEST(Random, CounterUniformIsAPureFunction) {
  EXPECT_EQ(counter_uniform(11, 3), counter_uniform(11, 3));
  EXPECT_NE(counter_uniform(11, 3), counter_uniform(11, 4));
}

TEST(Random, NormalQuantileMatchesReference) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(0.025), -1.959963984540054, 1e-12);
}

TEST(Random, NormalMoments) {
  Rng r(RandomSeed{3});
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}
