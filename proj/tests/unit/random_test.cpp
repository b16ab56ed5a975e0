#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "fedhorizon/random.hpp"

namespace fh = fedhorizon;

TEST(Rng, SameSeedSameStream) {
  fh::Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, Mt19937_64ReferenceValue) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the C++ standard.
  fh::Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, Uniform01InRange) {
  fh::Rng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(Rng, BelowCoversRangeOnly) {
  fh::Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_EQ(rng.below(1), 0u);
  EXPECT_EQ(rng.below(0), 0u);
}

TEST(Rng, NormalMoments) {
  fh::Rng rng(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  fh::Rng rng(9);
  for (std::size_t n : {0u, 1u, 2u, 17u, 100u}) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(std::span(v));
    std::vector<std::size_t> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(sorted[i], i);
  }
}

TEST(DeriveSeed, DistinctPerRoundAndNode) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 50; ++r) {
    for (const char* id : {"nih", "ucl", "a", "b"}) seen.insert(fh::derive_seed(1, r, id));
  }
  EXPECT_EQ(seen.size(), 200u);
  EXPECT_EQ(fh::derive_seed(1, 2, "nih"), fh::derive_seed(1, 2, "nih"));
  EXPECT_NE(fh::derive_seed(1, 2, "nih"), fh::derive_seed(2, 2, "nih"));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fh::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fh::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fh::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
