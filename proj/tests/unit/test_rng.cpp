#include <gtest/gtest.h>

#include <cmath>

#include "latentmark/rng.hpp"

using latentmark::CounterRng;

// Reference SplitMix64 (Vigna), written out independently.
static std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TEST(Rng, MixIsTheSplitMixFinalizer) {
  std::uint64_t state = 0;
  const std::uint64_t first = splitmix64(state);
  EXPECT_EQ(CounterRng::mix(0x9e3779b97f4a7c15ull), first);
  EXPECT_EQ(first, 0xe220a8397b1dcdafull);
}

TEST(Rng, SameSeedAndStreamReproduce) {
  CounterRng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformMoments) {
  CounterRng rng(1);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 2e-3);
}

TEST(Rng, BelowIsUniformChiSquare) {
  CounterRng rng(5);
  const int bins = 8, n = 80000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) ++counts[rng.below(bins)];
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / double(bins)) * (c - n / double(bins)) / (n / double(bins));
  EXPECT_LT(chi2, 18.475);  // chi-square(7) critical value at p = 0.01
}

TEST(Rng, NormalMoments) {
  CounterRng rng(9);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Rng, BelowMatchesWideMultiply) {
  __extension__ using u128 = unsigned __int128;
  CounterRng a(77), b(77);
  for (std::uint64_t n : {1ull, 3ull, 1000ull, 0xffffffffull, 0x123456789abcdefull, ~0ull}) {
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t x = b.next_u64();
      const auto expect = static_cast<std::uint64_t>((static_cast<u128>(x) * n) >> 64);
      ASSERT_EQ(a.below(n), expect);
    }
  }
}
