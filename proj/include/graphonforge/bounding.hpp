#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphonforge/errors.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/rng.hpp"

namespace graphonforge {

// Finite sum of coefficients times z^{M_j}, keyed by the rank j.
class MonomialPolynomial {
 public:
  using Map = std::map<std::uint64_t, double>;

  MonomialPolynomial() = default;
  explicit MonomialPolynomial(Map coeffs) : c_(std::move(coeffs)) { prune(); }

  const Map& coefficients() const { return c_; }
  bool empty() const { return c_.empty(); }
  double coefficient(std::uint64_t rank) const {
    auto it = c_.find(rank);
    return it == c_.end() ? 0.0 : it->second;
  }
  void set(std::uint64_t rank, double v) {
    if (rank < 1) throw ValidationError("monomial rank must be >= 1");
    if (v == 0.0) c_.erase(rank);
    else c_[rank] = v;
  }
  void add(std::uint64_t rank, double v) { set(rank, coefficient(rank) + v); }

  // Largest variable index used, 0 for constants.
  int max_variable() const {
    int m = 0;
    for (const auto& [r, c] : c_) m = std::max(m, MultisetCache::at(r).max_element());
    return m;
  }

  double eval(std::span<const double> z) const {
    double s = 0;
    for (const auto& [r, c] : c_) s += c * monomial_eval(MultisetCache::at(r), z);
    return s;
  }

  // Derivative with respect to z_n (1-based).
  double partial(std::span<const double> z, int n) const {
    double s = 0;
    for (const auto& [r, c] : c_) {
      const Multiset& m = MultisetCache::at(r);
      if (m.multiplicity(n)) s += c * monomial_partial(m, z, n);
    }
    return s;
  }

  MonomialPolynomial operator-(const MonomialPolynomial& o) const {
    MonomialPolynomial r = *this;
    for (const auto& [k, v] : o.c_) r.add(k, -v);
    return r;
  }
  MonomialPolynomial operator+(const MonomialPolynomial& o) const {
    MonomialPolynomial r = *this;
    for (const auto& [k, v] : o.c_) r.add(k, v);
    return r;
  }
  MonomialPolynomial operator*(double s) const {
    MonomialPolynomial r;
    for (const auto& [k, v] : c_) r.set(k, v * s);
    return r;
  }
  bool operator==(const MonomialPolynomial& o) const { return c_ == o.c_; }

  Json to_json() const {
    Json j = Json::object();
    for (const auto& [r, c] : c_) j[std::to_string(r)] = c;
    return j;
  }
  static MonomialPolynomial from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("polynomial must be a JSON object keyed by monomial rank");
    MonomialPolynomial p;
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::uint64_t r = 0;
      try {
        std::size_t used = 0;
        r = std::stoull(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("x");
      } catch (...) {
        throw ValidationError("polynomial key is not a monomial rank: " + it.key());
      }
      if (!it.value().is_number()) throw ValidationError("polynomial coefficient must be a number");
      p.set(r, it.value().get<double>());
    }
    return p;
  }

 private:
  void prune() {
    for (auto it = c_.begin(); it != c_.end();) {
      if (it->first < 1) throw ValidationError("monomial rank must be >= 1");
      it = it->second == 0.0 ? c_.erase(it) : std::next(it);
    }
  }
  Map c_;
};

// Coefficient bound 2^(-2^j)/9 at rank j (underflows to 0 for j >= 11).
inline double coefficient_bound(std::uint64_t j) {
  if (j >= 11) return 0.0;
  return std::ldexp(1.0, -(1 << j)) / 9.0;
}

struct BoundingTriple {
  MonomialPolynomial p;
  double l = 0.0;
  double u = 1.0;

  bool trivial() const { return p.empty() && l == 0.0 && u == 1.0; }
  bool operator==(const BoundingTriple& o) const { return p == o.p && l == o.l && u == o.u; }

  Json to_json() const { return Json{{"p", p.to_json()}, {"l", l}, {"u", u}}; }
  static BoundingTriple from_json(const Json& j) {
    try {
      BoundingTriple t;
      t.p = j.contains("p") ? MonomialPolynomial::from_json(j.at("p")) : MonomialPolynomial{};
      t.l = j.value("l", 0.0);
      t.u = j.value("u", 1.0);
      return t;
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("malformed bounding triple: ") + e.what());
    }
  }
};

// Truncation of (p_i, l_i, u_i); entries past the stored length are (0,0,1).
class BoundingSequence {
 public:
  static constexpr int kDefaultLength = 8;
  static constexpr int kDefaultZDim = 6;

  BoundingSequence() : BoundingSequence(kDefaultLength, kDefaultZDim) {}
  BoundingSequence(int length, int z_dim) : triples_(static_cast<std::size_t>(length)), z_dim_(z_dim) {
    if (length < 0) throw ValidationError("sequence length must be non-negative");
    if (z_dim < 0) throw ValidationError("z dimension must be non-negative");
  }

  int length() const { return static_cast<int>(triples_.size()); }
  int z_dim() const { return z_dim_; }

  // 1-based access; the default tail element beyond the stored length.
  const BoundingTriple& triple(std::uint64_t i) const {
    static const BoundingTriple tail{};
    if (i < 1) throw ValidationError("triple index must be >= 1");
    return i <= triples_.size() ? triples_[i - 1] : tail;
  }

  void set_triple(std::uint64_t i, BoundingTriple t) {
    if (i < 1) throw ValidationError("triple index must be >= 1");
    if (i > triples_.size()) triples_.resize(i);
    triples_[i - 1] = std::move(t);
  }

  // Same sequence with every triple beyond index k made trivial.
  BoundingSequence truncated(int k) const {
    BoundingSequence r = *this;
    for (std::size_t i = static_cast<std::size_t>(std::max(k, 0)); i < r.triples_.size(); ++i) r.triples_[i] = {};
    return r;
  }

  // p_i(z), l_i, u_i helpers.
  double p(std::uint64_t i, std::span<const double> z) const { return triple(i).p.eval(z); }

  // Positive and negative parts of the coefficient of p_i at rank j.
  double pi_plus(std::uint64_t i, std::uint64_t j) const {
    return std::max(triple(i).p.coefficient(j), 0.0);
  }
  double pi_minus(std::uint64_t i, std::uint64_t j) const {
    return std::max(-triple(i).p.coefficient(j), 0.0);
  }

  // z admissible when l_i <= p_i(z) <= u_i for every stored triple.
  bool admissible(std::span<const double> z, double slack = 0.0) const {
    for (std::size_t i = 1; i <= triples_.size(); ++i) {
      const auto& t = triple(i);
      const double v = t.p.eval(z);
      if (v < t.l - slack || v > t.u + slack) return false;
    }
    return true;
  }

  bool operator==(const BoundingSequence& o) const {
    const std::size_t n = std::max(triples_.size(), o.triples_.size());
    for (std::size_t i = 1; i <= n; ++i)
      if (!(triple(i) == o.triple(i))) return false;
    return z_dim_ == o.z_dim_;
  }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& t : triples_) arr.push_back(t.to_json());
    return Json{{"triples", arr}, {"z_dim", z_dim_}};
  }

  static BoundingSequence from_json(const Json& j) {
    if (!j.is_object() || !j.contains("triples") || !j.at("triples").is_array())
      throw ValidationError("bounding JSON needs a 'triples' array");
    const int z_dim = j.value("z_dim", kDefaultZDim);
    BoundingSequence s(0, z_dim);
    std::uint64_t i = 1;
    for (const auto& t : j.at("triples")) s.set_triple(i++, BoundingTriple::from_json(t));
    if (j.contains("length")) {
      const int len = j.at("length").get<int>();
      if (len < s.length()) throw ValidationError("declared length shorter than triple list");
      s.triples_.resize(static_cast<std::size_t>(len));
    }
    return s;
  }

 private:
  std::vector<BoundingTriple> triples_;
  int z_dim_;
};

// ---------------------------------------------------------------------------
// Validation

struct TripleCheck {
  std::uint64_t index = 0;
  bool ok = true;
  bool certified = true;       // false when accepted only by the sampled re-check
  std::string clause;          // first violated clause, empty when ok
  std::string detail;
};

struct ValidationReport {
  bool valid = true;
  std::vector<TripleCheck> triples;

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& t : triples)
      arr.push_back(Json{{"index", t.index}, {"ok", t.ok}, {"certified", t.certified},
                         {"clause", t.clause}, {"detail", t.detail}});
    return Json{{"valid", valid}, {"triples", arr}};
  }
};

struct ValidateOptions {
  bool strict = false;             // re-check interval failures on sampled points
  std::uint64_t grid_points = 10000;
  std::uint64_t seed = 0;
};

namespace detail {

// Interval enclosure of sum c_j z^{M_j} over [0,1]^N: each non-constant
// monomial ranges over [0,1].
inline std::pair<double, double> enclose(const MonomialPolynomial& p) {
  double lo = 0, hi = 0;
  for (const auto& [r, c] : p.coefficients()) {
    if (r == 1) {
      lo += c;
      hi += c;
    } else {
      lo += std::min(c, 0.0);
      hi += std::max(c, 0.0);
    }
  }
  return {lo, hi};
}

inline MonomialPolynomial derivative(const MonomialPolynomial& p, int n) {
  MonomialPolynomial d;
  for (const auto& [r, c] : p.coefficients()) {
    const Multiset& m = MultisetCache::at(r);
    const int mult = m.multiplicity(n);
    if (mult) d.add(rank(m.without_one(n)), c * mult);
  }
  return d;
}

// Sample points: the two extreme corners, then uniform draws.
inline std::vector<std::vector<double>> sample_box(int n, std::uint64_t count, std::uint64_t seed) {
  std::vector<std::vector<double>> pts;
  pts.emplace_back(static_cast<std::size_t>(n), 0.0);
  pts.emplace_back(static_cast<std::size_t>(n), 1.0);
  RandomStream r(seed, 0x626f78);
  while (pts.size() < count) {
    std::vector<double> z(static_cast<std::size_t>(n));
    for (auto& v : z) v = r.uniform();
    pts.push_back(std::move(z));
  }
  return pts;
}

}  // namespace detail

inline TripleCheck validate_triple(const BoundingTriple& t, std::uint64_t index, int z_dim,
                                   const ValidateOptions& opt = {}) {
  TripleCheck c;
  c.index = index;
  auto fail = [&](std::string clause, std::string detail) {
    c.ok = false;
    c.clause = std::move(clause);
    c.detail = std::move(detail);
    return c;
  };
  if (!(t.l >= 0.0)) return fail("0 <= l", "l = " + format_number(t.l));
  if (!(t.l <= t.u)) return fail("l <= u", "l = " + format_number(t.l) + ", u = " + format_number(t.u));
  if (!(t.u <= 1.0)) return fail("u <= 1", "u = " + format_number(t.u));
  for (const auto& [j, v] : t.p.coefficients()) {
    const double b = coefficient_bound(j);
    if (std::abs(v) > b)
      return fail("coefficient bound", "|pi_" + std::to_string(j) + "| = " + format_number(std::abs(v)) +
                                           " exceeds " + format_number(b));
  }
  if (t.p.max_variable() > z_dim)
    return fail("truncation", "polynomial uses z_" + std::to_string(t.p.max_variable()) +
                                  " beyond dimension " + std::to_string(z_dim));

  struct Clause {
    std::string name;
    MonomialPolynomial poly;
    double lo, hi;
  };
  std::vector<Clause> clauses{{"range [0,1]", t.p, 0.0, 1.0}};
  for (int n = 1; n <= z_dim; ++n)
    clauses.push_back({"partial d/dz" + std::to_string(n) + " in [-1,1]", detail::derivative(t.p, n), -1.0, 1.0});

  std::optional<std::vector<std::vector<double>>> grid;
  for (const auto& cl : clauses) {
    const auto [lo, hi] = detail::enclose(cl.poly);
    if (lo >= cl.lo && hi <= cl.hi) continue;
    const std::string enclosure = "enclosure [" + format_number(lo) + ", " + format_number(hi) + "]";
    if (!opt.strict) return fail(cl.name, "interval check failed: " + enclosure);
    if (!grid) grid = detail::sample_box(z_dim, opt.grid_points, opt.seed ^ index);
    for (const auto& z : *grid) {
      const double v = cl.poly.eval(z);
      if (v < cl.lo || v > cl.hi) return fail(cl.name, "witness value " + format_number(v));
    }
    c.certified = false;
    c.detail = "accepted after sampled re-check; " + enclosure;
  }
  return c;
}

inline ValidationReport validate(const BoundingSequence& s, const ValidateOptions& opt = {}) {
  ValidationReport rep;
  for (int i = 1; i <= s.length(); ++i) {
    auto c = validate_triple(s.triple(static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(i), s.z_dim(), opt);
    rep.valid = rep.valid && c.ok;
    rep.triples.push_back(std::move(c));
  }
  return rep;
}

inline void require_valid(const BoundingSequence& s, const ValidateOptions& opt = {}) {
  const auto rep = validate(s, opt);
  if (!rep.valid)
    for (const auto& t : rep.triples)
      if (!t.ok)
        throw ValidationError("invalid bounding sequence: triple " + std::to_string(t.index) + " violates " +
                              t.clause + " (" + t.detail + ")");
}

// ---------------------------------------------------------------------------
// Strengthening

inline BoundingSequence strengthen(const BoundingSequence& s, std::uint64_t i, const BoundingTriple& t,
                                   const ValidateOptions& opt = {}) {
  if (!s.triple(i).trivial())
    throw ValidationError("strengthening may only replace a trivial triple (index " + std::to_string(i) + ")");
  const auto check = validate_triple(t, i, s.z_dim(), opt);
  if (!check.ok) throw ValidationError("new triple violates " + check.clause + " (" + check.detail + ")");
  BoundingSequence r = s;
  r.set_triple(i, t);
  return r;
}

// True iff b agrees with a except at indices > k where a is trivial.
inline bool is_k_strengthening(const BoundingSequence& a, const BoundingSequence& b, std::uint64_t k) {
  if (a.z_dim() != b.z_dim()) return false;
  const std::uint64_t n = static_cast<std::uint64_t>(std::max(a.length(), b.length()));
  for (std::uint64_t i = 1; i <= n; ++i) {
    if (a.triple(i) == b.triple(i)) continue;
    if (!a.triple(i).trivial() || i <= k) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Closeness of polynomials

struct Closeness {
  double bound = 0.0;    // sum of |coefficient| route, valid on all of [0,1]^N
  double sampled = 0.0;  // maximum over the sample grid
};

struct GridSpec {
  std::uint64_t points = 1000;
  std::uint64_t seed = 0;
};

inline Closeness epsilon_close(const MonomialPolynomial& f, const MonomialPolynomial& g, int z_dim,
                               const GridSpec& grid = {}) {
  const MonomialPolynomial d = f - g;
  Closeness c;
  double total = 0;
  std::vector<double> per_var(static_cast<std::size_t>(z_dim) + 1, 0.0);
  for (const auto& [r, v] : d.coefficients()) {
    total += std::abs(v);
    for (const auto& [n, mult] : MultisetCache::at(r).counts())
      if (n <= z_dim) per_var[static_cast<std::size_t>(n)] += std::abs(v) * mult;
  }
  c.bound = total;
  for (double v : per_var) c.bound = std::max(c.bound, v);
  for (const auto& z : detail::sample_box(z_dim, grid.points, grid.seed)) {
    c.sampled = std::max(c.sampled, std::abs(d.eval(z)));
    for (int n = 1; n <= z_dim; ++n) c.sampled = std::max(c.sampled, std::abs(d.partial(z, n)));
  }
  return c;
}

}  // namespace graphonforge
