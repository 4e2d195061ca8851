#pragma once

#include <algorithm>
#include <cctype>
#include <climits>
#include <initializer_list>
#include <iterator>
#include <compare>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphonforge/errors.hpp"

namespace graphonforge {

// Finite multiset of positive integers, stored as a sorted element list.
class Multiset {
 public:
  Multiset() = default;

  explicit Multiset(std::vector<int> elements) : elems_(std::move(elements)) {
    for (int e : elems_)
      if (e < 1) throw ValidationError("multiset elements must be positive integers");
    std::sort(elems_.begin(), elems_.end());
    for (int e : elems_) sum_ += e;
  }

  Multiset(std::initializer_list<int> elements) : Multiset(std::vector<int>(elements)) {}

  // Parses a literal such as "{1,1,3}" or "{}".
  static Multiset parse(std::string_view text) {
    auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    text = trim(text);
    if (text.size() < 2 || text.front() != '{' || text.back() != '}')
      throw ValidationError("multiset literal must look like {1,1,3}");
    std::string_view body = trim(text.substr(1, text.size() - 2));
    std::vector<int> out;
    while (!body.empty()) {
      const auto comma = body.find(',');
      std::string_view tok = trim(body.substr(0, comma));
      if (tok.empty()) throw ValidationError("empty element in multiset literal");
      int v = 0;
      for (char c : tok) {
        if (c < '0' || c > '9') throw ValidationError("non-numeric multiset element");
        v = v * 10 + (c - '0');
        if (v > 1000000) throw ValidationError("multiset element too large");
      }
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      body = body.substr(comma + 1);
      if (trim(body).empty()) throw ValidationError("trailing comma in multiset literal");
    }
    return Multiset(std::move(out));
  }

  const std::vector<int>& elements() const { return elems_; }
  int sum() const { return sum_; }
  bool empty() const { return elems_.empty(); }
  std::size_t size() const { return elems_.size(); }
  int min_element() const { return elems_.empty() ? 0 : elems_.front(); }
  int max_element() const { return elems_.empty() ? 0 : elems_.back(); }

  int multiplicity(int n) const {
    auto [lo, hi] = std::equal_range(elems_.begin(), elems_.end(), n);
    return static_cast<int>(hi - lo);
  }

  // (value, multiplicity) pairs in increasing value order.
  std::vector<std::pair<int, int>> counts() const {
    std::vector<std::pair<int, int>> out;
    for (int e : elems_) {
      if (!out.empty() && out.back().first == e)
        ++out.back().second;
      else
        out.emplace_back(e, 1);
    }
    return out;
  }

  Multiset without_min() const {
    if (elems_.empty()) return *this;
    return Multiset(std::vector<int>(elems_.begin() + 1, elems_.end()));
  }

  Multiset without_one(int n) const {
    std::vector<int> v = elems_;
    auto it = std::find(v.begin(), v.end(), n);
    if (it != v.end()) v.erase(it);
    return Multiset(std::move(v));
  }

  Multiset united(const Multiset& other) const {
    std::vector<int> v;
    v.reserve(elems_.size() + other.elems_.size());
    std::merge(elems_.begin(), elems_.end(), other.elems_.begin(), other.elems_.end(),
               std::back_inserter(v));
    Multiset m;
    m.elems_ = std::move(v);
    m.sum_ = sum_ + other.sum_;
    return m;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < elems_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(elems_[i]);
    }
    return s + "}";
  }

  bool operator==(const Multiset& o) const { return elems_ == o.elems_; }

 private:
  std::vector<int> elems_;
  int sum_ = 0;
};

// Graded by sum; ties go to the multiset whose count vector is smaller at the
// first position where the two count vectors differ.
inline std::strong_ordering compare(const Multiset& a, const Multiset& b) {
  if (a.sum() != b.sum()) return a.sum() <=> b.sum();
  const auto ca = a.counts();
  const auto cb = b.counts();
  std::size_t i = 0, j = 0;
  while (i < ca.size() || j < cb.size()) {
    const int va = i < ca.size() ? ca[i].first : INT_MAX;
    const int vb = j < cb.size() ? cb[j].first : INT_MAX;
    const int n = std::min(va, vb);
    const int xa = va == n ? ca[i].second : 0;
    const int xb = vb == n ? cb[j].second : 0;
    if (xa != xb) return xa <=> xb;
    if (va == n) ++i;
    if (vb == n) ++j;
  }
  return std::strong_ordering::equal;
}

// Partition counts used for ranking. Grades above kMaxGrade are rejected.
class PartitionTable {
 public:
  static constexpr int kMaxGrade = 200;

  static const PartitionTable& instance() {
    static const PartitionTable table;
    return table;
  }

  // Number of partitions of m whose parts are all >= j.
  std::uint64_t at_least(int m, int j) const {
    if (m == 0) return 1;
    if (m < 0 || j > m) return 0;
    return q_[static_cast<std::size_t>(m) * stride_ + static_cast<std::size_t>(j)];
  }

  std::uint64_t partitions(int n) const { return at_least(n, 1); }

  // Rank of the first multiset with sum n.
  std::uint64_t grade_offset(int n) const {
    check_grade(n);
    return offset_[static_cast<std::size_t>(n)];
  }

  static void check_grade(int n) {
    if (n < 0 || n > kMaxGrade)
      throw ValidationError("multiset sum beyond supported grade " + std::to_string(kMaxGrade));
  }

 private:
  PartitionTable() : stride_(kMaxGrade + 2), q_((kMaxGrade + 1) * stride_, 0), offset_(kMaxGrade + 2, 0) {
    for (int m = 1; m <= kMaxGrade; ++m) {
      for (int j = m; j >= 1; --j) {
        // Either no part equals j, or remove one part j.
        const std::uint64_t without = (j + 1 <= m) ? at_least(m, j + 1) : 0;
        const std::uint64_t with = at_least(m - j, j);
        q_[static_cast<std::size_t>(m) * stride_ + static_cast<std::size_t>(j)] = without + with;
      }
    }
    offset_[0] = 1;
    for (int n = 1; n <= kMaxGrade + 1; ++n) offset_[n] = offset_[n - 1] + partitions(n - 1);
  }

  std::size_t stride_;
  std::vector<std::uint64_t> q_;
  std::vector<std::uint64_t> offset_;
};

// Position of a in the order, starting from 1 for the empty multiset.
inline std::uint64_t rank(const Multiset& a) {
  const auto& t = PartitionTable::instance();
  int remaining = a.sum();
  std::uint64_t r = t.grade_offset(remaining);
  const auto counts = a.counts();
  std::size_t ci = 0;
  for (int j = 1; remaining > 0; ++j) {
    const int chi = (ci < counts.size() && counts[ci].first == j) ? counts[ci].second : 0;
    for (int c = 0; c < chi; ++c) r += t.at_least(remaining - j * c, j + 1);
    remaining -= j * chi;
    if (chi) ++ci;
  }
  return r;
}

// The i-th multiset, i >= 1.
inline Multiset unrank(std::uint64_t i) {
  if (i < 1) throw ValidationError("multiset rank must be >= 1");
  const auto& t = PartitionTable::instance();
  int n = 0;
  while (n + 1 <= PartitionTable::kMaxGrade && t.grade_offset(n + 1) <= i) ++n;
  if (n == PartitionTable::kMaxGrade && i >= t.grade_offset(n) + t.partitions(n))
    throw ValidationError("multiset rank beyond supported range");
  std::uint64_t pos = i - t.grade_offset(n);
  std::vector<int> elems;
  int remaining = n;
  for (int j = 1; remaining > 0; ++j) {
    int c = 0;
    for (;; ++c) {
      if (j * c > remaining) throw ValidationError("multiset unrank: inconsistent partition table");
      const std::uint64_t block = t.at_least(remaining - j * c, j + 1);
      if (pos < block) break;
      pos -= block;
    }
    for (int k = 0; k < c; ++k) elems.push_back(j);
    remaining -= j * c;
  }
  return Multiset(std::move(elems));
}

// Cached lookups of M_i for small i; falls back to unrank beyond the cache.
class MultisetCache {
 public:
  static constexpr std::uint64_t kSize = 8192;

  static const Multiset& at(std::uint64_t i) {
    static const MultisetCache cache;
    if (i >= 1 && i <= kSize) return cache.items_[i - 1];
    // Beyond the cache: a small per-thread ring so a few references stay valid.
    thread_local std::vector<Multiset> ring(16);
    thread_local std::size_t next = 0;
    Multiset& slot = ring[next++ % ring.size()];
    slot = unrank(i);
    return slot;
  }

 private:
  MultisetCache() {
    items_.reserve(kSize);
    for (std::uint64_t i = 1; i <= kSize; ++i) items_.push_back(unrank(i));
  }
  std::vector<Multiset> items_;
};

// z^M: product of z_n (1-based) over the elements of m with multiplicity.
inline double monomial_eval(const Multiset& m, std::span<const double> z) {
  double v = 1.0;
  for (int e : m.elements()) {
    if (static_cast<std::size_t>(e) > z.size())
      throw TruncationError("truncation exceeded: monomial " + m.to_string() +
                            " uses z_" + std::to_string(e) + " but z has dimension " +
                            std::to_string(z.size()));
    v *= z[static_cast<std::size_t>(e - 1)];
  }
  return v;
}

// Partial derivative of z^M with respect to z_n.
inline double monomial_partial(const Multiset& m, std::span<const double> z, int n) {
  const int mult = m.multiplicity(n);
  if (mult == 0) return 0.0;
  return mult * monomial_eval(m.without_one(n), z);
}

// Block index k >= 1 with offset j in [1, k+1], enumerated as
// (1,1),(1,2),(2,1),(2,2),(2,3),(3,1),...
struct DoubleIndex {
  std::uint64_t block = 1;
  std::uint64_t offset = 1;
  bool operator==(const DoubleIndex&) const = default;
};

inline std::uint64_t flatten(DoubleIndex d) {
  if (d.block < 1 || d.offset < 1 || d.offset > d.block + 1)
    throw ValidationError("double index offset out of range [1, k+1]");
  return (d.block - 1) * (d.block + 2) / 2 + d.offset;
}

inline DoubleIndex unflatten(std::uint64_t flat) {
  if (flat < 1) throw ValidationError("flat index must be >= 1");
  std::uint64_t k = 1;
  while (k * (k + 3) / 2 < flat) ++k;  // last flat index of block k is k(k+3)/2
  return {k, flat - (k - 1) * (k + 2) / 2};
}

}  // namespace graphonforge
