#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "graphonforge/multiset.hpp"
#include "graphonforge/rng.hpp"

using namespace graphonforge;

namespace {

// Independent oracle: all multisets with sum <= max_sum as count vectors,
// sorted by (sum, count vector lexicographic ascending).
using Chi = std::array<int, 16>;

void gen(int remaining, int part, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  out.push_back(cur);
  for (int p = part; p <= remaining; ++p) {
    cur.push_back(p);
    gen(remaining - p, p, cur, out);
    cur.pop_back();
  }
}

std::vector<std::vector<int>> brute_order(int max_sum) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  gen(max_sum, 1, cur, all);
  auto key = [](const std::vector<int>& v) {
    Chi chi{};
    int s = 0;
    for (int e : v) {
      ++chi[static_cast<std::size_t>(e)];
      s += e;
    }
    return std::make_pair(s, chi);
  };
  std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    auto ka = key(a), kb = key(b);
    if (ka.first != kb.first) return ka.first < kb.first;
    for (std::size_t n = 1; n < ka.second.size(); ++n)
      if (ka.second[n] != kb.second[n]) return ka.second[n] < kb.second[n];
    return false;
  });
  return all;
}

// Euler's pentagonal recurrence, independent of the ranking tables.
std::vector<long long> partition_numbers(int n) {
  std::vector<long long> p(static_cast<std::size_t>(n) + 1, 0);
  p[0] = 1;
  for (int m = 1; m <= n; ++m) {
    long long s = 0;
    for (int k = 1;; ++k) {
      const int g1 = k * (3 * k - 1) / 2, g2 = k * (3 * k + 1) / 2;
      if (g1 > m) break;
      const long long sign = (k % 2) ? 1 : -1;
      s += sign * p[static_cast<std::size_t>(m - g1)];
      if (g2 <= m) s += sign * p[static_cast<std::size_t>(m - g2)];
    }
    p[static_cast<std::size_t>(m)] = s;
  }
  return p;
}

}  // namespace

TEST(MultisetOrder, FirstElementsMatchListedOrder) {
  EXPECT_EQ(unrank(1), Multiset{});
  EXPECT_EQ(unrank(2), (Multiset{1}));
  EXPECT_EQ(unrank(3), (Multiset{2}));
  EXPECT_EQ(unrank(4), (Multiset{1, 1}));
  EXPECT_EQ(unrank(7), (Multiset{1, 1, 1}));
  EXPECT_EQ(rank(Multiset{}), 1u);
  EXPECT_EQ(rank(Multiset{2}), 3u);
  EXPECT_EQ(rank(Multiset{1, 2}), 6u);
}

TEST(MultisetOrder, CompareExamples) {
  EXPECT_TRUE(compare(Multiset{}, Multiset{1}) < 0);
  EXPECT_TRUE(compare(Multiset{2}, Multiset{1, 1}) < 0);
  EXPECT_TRUE(compare(Multiset{3}, Multiset{1, 2}) < 0);
  EXPECT_TRUE(compare(Multiset{1, 2}, Multiset{1, 2}) == 0);
}

TEST(MultisetOrder, MatchesBruteForceEnumerationUpToSum12) {
  const auto order = brute_order(12);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Multiset m(order[i]);
    ASSERT_EQ(rank(m), i + 1) << m.to_string();
    ASSERT_EQ(unrank(i + 1), m);
    if (i > 0) ASSERT_TRUE(compare(Multiset(order[i - 1]), m) < 0);
  }
}

TEST(MultisetOrder, RankUnrankRoundTrip) {
  for (std::uint64_t i = 1; i <= 10000; ++i) ASSERT_EQ(rank(unrank(i)), i);
}

TEST(MultisetOrder, SumBoundedByRank) {
  for (std::uint64_t i = 1; i <= 100000; ++i) ASSERT_LE(static_cast<std::uint64_t>(unrank(i).sum()), i);
}

TEST(MultisetOrder, GradeCountsArePartitionNumbers) {
  const auto p = partition_numbers(40);
  const auto& t = PartitionTable::instance();
  for (int n = 0; n <= 40; ++n) {
    EXPECT_EQ(t.partitions(n), static_cast<std::uint64_t>(p[static_cast<std::size_t>(n)])) << n;
    const std::uint64_t first = t.grade_offset(n);
    EXPECT_EQ(unrank(first).sum(), n);
    if (first > 1) EXPECT_EQ(unrank(first - 1).sum(), n - 1);
  }
  EXPECT_EQ(t.partitions(40), 37338u);
}

TEST(MultisetOrder, GradeCountsBelowExponentialBound) {
  const auto& t = PartitionTable::instance();
  for (int n = 1; n <= 40; ++n)
    EXPECT_LE(static_cast<double>(t.partitions(n)), std::exp(10.0 * std::sqrt(static_cast<double>(n))));
}

TEST(MultisetOrder, TotalOrderProperties) {
  RandomStream r(11, 0);
  auto random_multiset = [&] {
    std::vector<int> v;
    const int len = static_cast<int>(r.below(6));
    for (int i = 0; i < len; ++i) v.push_back(1 + static_cast<int>(r.below(6)));
    return Multiset(v);
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const Multiset a = random_multiset(), b = random_multiset(), c = random_multiset();
    const auto ab = compare(a, b), ba = compare(b, a);
    EXPECT_EQ(ab < 0, ba > 0);
    EXPECT_EQ(ab == 0, a == b);
    if (a.sum() < b.sum()) EXPECT_TRUE(ab < 0);
    if (compare(a, b) < 0 && compare(b, c) < 0) EXPECT_TRUE(compare(a, c) < 0);
    EXPECT_EQ(compare(a, b) < 0, rank(a) < rank(b));
  }
}

TEST(Monomial, Evaluation) {
  const std::vector<double> z{0.5, 0.25};
  EXPECT_DOUBLE_EQ(monomial_eval(Multiset{}, z), 1.0);
  EXPECT_DOUBLE_EQ(monomial_eval(Multiset{1, 1}, z), 0.25);
  const std::vector<double> z2{0.3, 0.4};
  EXPECT_NEAR(monomial_eval(Multiset{1, 2}, z2), 0.12, 1e-15);
  EXPECT_THROW(monomial_eval(Multiset{3}, z2), TruncationError);
  EXPECT_DOUBLE_EQ(monomial_partial(Multiset{1, 1, 2}, z, 1), 2 * 0.5 * 0.25);
}

TEST(Multiset, LiteralParsing) {
  EXPECT_EQ(Multiset::parse("{1,1,3}"), (Multiset{1, 1, 3}));
  EXPECT_EQ(Multiset::parse(" { 3 , 1 } "), (Multiset{1, 3}));
  EXPECT_EQ(Multiset::parse("{}"), Multiset{});
  EXPECT_EQ(Multiset::parse("{1,1,3}").to_string(), "{1,1,3}");
  EXPECT_THROW(Multiset::parse("1,2"), ValidationError);
  EXPECT_THROW(Multiset::parse("{0}"), ValidationError);
  EXPECT_THROW(Multiset::parse("{1,}"), ValidationError);
  EXPECT_THROW(Multiset::parse("{a}"), ValidationError);
}

TEST(DoubleIndexMap, FlattenExamples) {
  EXPECT_EQ(flatten({1, 1}), 1u);
  EXPECT_EQ(flatten({1, 2}), 2u);
  EXPECT_EQ(flatten({2, 1}), 3u);
  EXPECT_EQ(flatten({2, 3}), 5u);
  EXPECT_EQ(unflatten(6), (DoubleIndex{3, 1}));
  EXPECT_THROW(flatten({2, 4}), ValidationError);
  EXPECT_THROW(flatten({2, 0}), ValidationError);
}

TEST(DoubleIndexMap, RoundTrip) {
  std::uint64_t expected = 1;
  for (std::uint64_t k = 1; k <= 60; ++k)
    for (std::uint64_t j = 1; j <= k + 1; ++j) {
      ASSERT_EQ(flatten({k, j}), expected);
      ASSERT_EQ(unflatten(expected), (DoubleIndex{k, j}));
      ++expected;
    }
}
