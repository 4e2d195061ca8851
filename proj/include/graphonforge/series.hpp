#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphonforge/bounding.hpp"
#include "graphonforge/density.hpp"
#include "graphonforge/errors.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/rng.hpp"
#include "graphonforge/wpz.hpp"

namespace graphonforge {

// ---------------------------------------------------------------------------
// Cells used to label vertices. Every cell is a subset of one construction
// part; the cells of all parts partition [0,1).

struct SeriesLabel {
  enum class Kind { Other, C, E };
  Kind kind = Kind::Other;
  int part = 0;
  int third = 0;        // C/E third, or the third of D_G
  int k = 0;            // coordinate level, 0 for the tail beyond K_max
  int sub = -1;         // first third of E: 0 below l_k, 1 between l_k and u_k, 2 above u_k
  double lo = 0.0;      // relative range inside the part
  double hi = 1.0;
  double measure = 0.0; // global measure
  std::string name;

  bool ce() const { return kind != Kind::Other; }
  bool tail() const { return ce() && k == 0; }
};

inline std::vector<SeriesLabel> series_labels(const BoundingSequence& p, int k_max) {
  using namespace wpz;
  if (k_max < 1 || k_max > kMaxCoordDepth - 1) throw ValidationError("K_max must lie in [1, 53]");
  std::vector<SeriesLabel> out;
  auto other = [&](int part, double lo, double hi, std::string name, int third = 0) {
    SeriesLabel l;
    l.part = part;
    l.third = third;
    l.lo = lo;
    l.hi = hi;
    l.measure = part_size(part) * (hi - lo);
    l.name = std::move(name);
    out.push_back(l);
  };
  other(A, 0, 1, "A");
  other(B, 0, 1, "B");
  for (int d = DA; d <= DF; ++d) other(d, 0, 1, part_name(d));
  for (int j = 0; j < 3; ++j) other(DG, j / 3.0, (j + 1) / 3.0, "D_G" + std::to_string(j + 1), j);
  out.back().hi = 1.0;
  other(F, 0, 1, "F");
  other(Q, 0, 1, "Q");
  other(R, 0, 1, "R");
  const double unit = 1.0 / 75.0;  // |C| / 3 = |E| / 3
  auto ce = [&](SeriesLabel::Kind kind, int third, int k, int sub, double a, double b) {
    SeriesLabel l;
    l.kind = kind;
    l.part = kind == SeriesLabel::Kind::C ? C : E;
    l.third = third;
    l.k = k;
    l.sub = sub;
    const std::string base = std::string(kind == SeriesLabel::Kind::C ? "C" : "E") + "[" + std::to_string(third) + ",";
    if (k > 0) {
      l.lo = (third + coord_low(k) + coord_width(k) * a) / 3.0;
      l.hi = (third + coord_low(k) + coord_width(k) * b) / 3.0;
      l.measure = coord_width(k) * (b - a) * unit;
      l.name = base + std::to_string(k) + (sub >= 0 ? "," + std::to_string(sub) : "") + "]";
    } else {
      l.lo = (third + coord_low(k_max + 1)) / 3.0;
      l.hi = (third + 1) / 3.0;
      l.measure = coord_width(k_max) * unit;
      l.name = base + ">" + std::to_string(k_max) + "]";
    }
    out.push_back(l);
  };
  for (int t = 0; t < 3; ++t)
    for (int k = 1; k <= k_max; ++k) ce(SeriesLabel::Kind::C, t, k, -1, 0, 1);
  for (int t = 0; t < 3; ++t) ce(SeriesLabel::Kind::C, t, 0, -1, 0, 1);
  for (int k = 1; k <= k_max; ++k) {
    const auto& tr = p.triple(static_cast<std::uint64_t>(k));
    ce(SeriesLabel::Kind::E, 0, k, 0, 0, tr.l);
    ce(SeriesLabel::Kind::E, 0, k, 1, tr.l, tr.u);
    ce(SeriesLabel::Kind::E, 0, k, 2, tr.u, 1);
  }
  for (int t = 1; t < 3; ++t)
    for (int k = 1; k <= k_max; ++k) ce(SeriesLabel::Kind::E, t, k, -1, 0, 1);
  for (int t = 0; t < 3; ++t) ce(SeriesLabel::Kind::E, t, 0, t == 0 ? 1 : -1, 0, 1);
  return out;
}

// Labeling index -> per-vertex label indices, vertex 0 varying fastest.
inline std::vector<std::size_t> labeling_digits(std::uint64_t index, int n, std::size_t labels) {
  std::vector<std::size_t> d(static_cast<std::size_t>(n));
  for (auto& x : d) {
    x = static_cast<std::size_t>(index % labels);
    index /= labels;
  }
  return d;
}

inline std::uint64_t labeling_count(int n, std::size_t labels, std::uint64_t cap) {
  std::uint64_t c = 1;
  for (int i = 0; i < n; ++i) {
    if (c > cap / labels) throw BudgetError("labeling count exceeds the budget of " + std::to_string(cap));
    c *= labels;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Truncated polynomial algebra in the monomials z^{M_i}.

struct Truncation {
  std::uint64_t i_max = 64;
  int n = 6;
};

// Coefficients kept below the truncation plus a bound on the absolute mass
// of everything dropped (every monomial is at most 1 on the unit box).
struct TruncPoly {
  std::map<std::uint64_t, double> c;
  double dropped = 0.0;

  static TruncPoly constant(double v) {
    TruncPoly p;
    if (v != 0.0) p.c[1] = v;
    return p;
  }
  bool zero() const { return c.empty() && dropped == 0.0; }
  double abs_sum() const {
    double s = 0;
    for (const auto& [r, v] : c) s += std::abs(v);
    return s;
  }
  double eval(std::span<const double> z) const {
    double s = 0;
    for (const auto& [r, v] : c) s += v * monomial_eval(MultisetCache::at(r), z);
    return s;
  }
  void add(const TruncPoly& o, double scale) {
    for (const auto& [r, v] : o.c) c[r] += scale * v;
    dropped += std::abs(scale) * o.dropped;
  }
};

namespace series_detail {

// Rank of M_a united with M_b, or 0 when it falls outside the truncation.
inline std::uint64_t union_rank(std::uint64_t a, std::uint64_t b, const Truncation& t) {
  if (a == 1 && b <= t.i_max) return b;
  if (b == 1 && a <= t.i_max) return a;
  if (a > t.i_max || b > t.i_max) return 0;
  struct Entry {
    std::uint64_t rank;
    int max_elem;
  };
  thread_local std::unordered_map<std::uint64_t, Entry> cache;
  const std::uint64_t key = (std::min(a, b) << 32) | std::max(a, b);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const Multiset m = MultisetCache::at(a).united(MultisetCache::at(b));
    Entry e{m.sum() <= PartitionTable::kMaxGrade ? rank(m) : std::numeric_limits<std::uint64_t>::max(),
            m.max_element()};
    it = cache.emplace(key, e).first;
  }
  if (it->second.rank > t.i_max || it->second.max_elem > t.n) return 0;
  return it->second.rank;
}

inline TruncPoly multiply(const TruncPoly& a, const TruncPoly& b, const Truncation& t) {
  TruncPoly r;
  for (const auto& [ra, ca] : a.c)
    for (const auto& [rb, cb] : b.c) {
      const std::uint64_t u = union_rank(ra, rb, t);
      if (u) r.c[u] += ca * cb;
      else r.dropped += std::abs(ca * cb);
    }
  r.dropped += a.dropped * b.abs_sum() + b.dropped * a.abs_sum() + a.dropped * b.dropped;
  for (auto it = r.c.begin(); it != r.c.end();) it = it->second == 0.0 ? r.c.erase(it) : std::next(it);
  return r;
}

// Single monomial z^{M_k}, respecting the truncation.
inline TruncPoly monomial(std::uint64_t k, const Truncation& t) {
  TruncPoly p;
  if (k <= t.i_max && MultisetCache::at(k).max_element() <= t.n) p.c[k] = 1.0;
  else p.dropped = 1.0;
  return p;
}

inline TruncPoly from_polynomial(const MonomialPolynomial& q, const Truncation& t, bool absolute) {
  TruncPoly p;
  for (const auto& [r, v] : q.coefficients()) {
    const double c = absolute ? std::abs(v) : v;
    if (r <= t.i_max && MultisetCache::at(r).max_element() <= t.n) p.c[r] += c;
    else p.dropped += std::abs(c);
  }
  return p;
}

}  // namespace series_detail

// Factors of the z-dependent part of a labeling term.
struct SeriesAtom {
  enum Kind : int { ZM, OneMinusZM, P, OneMinusP, CondLow, CondHigh };
  Kind kind;
  int k;
  auto operator<=>(const SeriesAtom&) const = default;
};

inline const char* atom_name(SeriesAtom::Kind k) {
  switch (k) {
    case SeriesAtom::ZM: return "z^M";
    case SeriesAtom::OneMinusZM: return "1-z^M";
    case SeriesAtom::P: return "p";
    case SeriesAtom::OneMinusP: return "1-p";
    case SeriesAtom::CondLow: return "(p-l)/(u-l)";
    default: return "(u-p)/(u-l)";
  }
}

// Polynomial of an atom; with `absolute`, a coefficient-wise majorant.
inline TruncPoly atom_poly(const SeriesAtom& a, const BoundingSequence& p, const Truncation& t, bool absolute) {
  using series_detail::from_polynomial;
  using series_detail::monomial;
  const auto k = static_cast<std::uint64_t>(a.k);
  const auto& tr = p.triple(k);
  switch (a.kind) {
    case SeriesAtom::ZM: return monomial(k, t);
    case SeriesAtom::OneMinusZM: {
      TruncPoly r = TruncPoly::constant(1.0);
      r.add(monomial(k, t), absolute ? 1.0 : -1.0);
      return r;
    }
    case SeriesAtom::P: return from_polynomial(tr.p, t, absolute);
    case SeriesAtom::OneMinusP: {
      TruncPoly r = TruncPoly::constant(1.0);
      r.add(from_polynomial(tr.p, t, absolute), absolute ? 1.0 : -1.0);
      return r;
    }
    case SeriesAtom::CondLow:
    case SeriesAtom::CondHigh: {
      const double width = tr.u - tr.l;
      if (!(width > 0)) return TruncPoly{};
      const bool low = a.kind == SeriesAtom::CondLow;
      TruncPoly r = from_polynomial(tr.p, t, absolute);
      if (!absolute && !low) {
        for (auto& [rk, v] : r.c) v = -v;
      }
      const double shift = low ? -tr.l : tr.u;
      r.c[1] += absolute ? std::abs(shift) : shift;
      if (r.c[1] == 0.0) r.c.erase(1);
      for (auto& [rk, v] : r.c) v /= width;
      r.dropped /= width;
      return r;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// The series object.

struct SeriesOptions {
  int k_max = 5;
  std::uint64_t i_max = 64;
  std::uint64_t samples = 1000000;          // total Monte Carlo budget, spread by label weight
  std::uint64_t min_samples = 32;           // per Monte Carlo labeling
  std::uint64_t max_samples = 100000;       // per labeling
  std::uint64_t max_labelings = 20000000;
  std::uint64_t seed = 0;
  bool strict = false;                      // sampled re-check of conservative validation failures
};

struct SeriesValue {
  double value = 0.0;
  double sigma = 0.0;
  bool admissible = true;
};

struct TruncatedSeries {
  std::string graph;
  int vertices = 0;
  int k_max = 0;
  std::uint64_t i_max = 0;
  BoundingSequence bounding;      // truncated to K_max
  MonomialPolynomial coefficients;
  MonomialPolynomial beta;        // |alpha_i| <= beta_i
  MonomialPolynomial variance;    // Monte Carlo variance as a polynomial in z
  double dropped_mass = 0.0;
  double weight_sum = 0.0;
  std::uint64_t labelings = 0;
  std::uint64_t nonzero_labelings = 0;
  std::uint64_t mc_labelings = 0;
  std::uint64_t mc_samples = 0;

  int z_dim() const { return bounding.z_dim(); }

  Json to_json() const {
    return Json{{"graph", graph},
                {"vertices", vertices},
                {"kmax", k_max},
                {"imax", i_max},
                {"bounding", bounding.to_json()},
                {"coefficients", coefficients.to_json()},
                {"beta", beta.to_json()},
                {"variance", variance.to_json()},
                {"dropped_mass", dropped_mass},
                {"weight_sum", weight_sum},
                {"labelings", labelings},
                {"nonzero_labelings", nonzero_labelings},
                {"mc_labelings", mc_labelings},
                {"mc_samples", mc_samples}};
  }

  static TruncatedSeries from_json(const Json& j) {
    try {
      TruncatedSeries s;
      s.graph = j.value("graph", std::string());
      s.vertices = j.value("vertices", 0);
      s.k_max = j.value("kmax", 0);
      s.i_max = j.value("imax", std::uint64_t{0});
      s.bounding = j.contains("bounding") ? BoundingSequence::from_json(j.at("bounding")) : BoundingSequence();
      s.coefficients = MonomialPolynomial::from_json(j.at("coefficients"));
      if (j.contains("beta")) s.beta = MonomialPolynomial::from_json(j.at("beta"));
      if (j.contains("variance")) s.variance = MonomialPolynomial::from_json(j.at("variance"));
      s.dropped_mass = j.value("dropped_mass", 0.0);
      s.weight_sum = j.value("weight_sum", 0.0);
      s.labelings = j.value("labelings", std::uint64_t{0});
      s.nonzero_labelings = j.value("nonzero_labelings", std::uint64_t{0});
      s.mc_labelings = j.value("mc_labelings", std::uint64_t{0});
      s.mc_samples = j.value("mc_samples", std::uint64_t{0});
      return s;
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("malformed series file: ") + e.what());
    }
  }
};

namespace series_detail {

struct Product {
  TruncPoly r, r_abs, r_sq;
};

// Evaluates labeling terms; shared read-only state plus a product cache.
class LabelingEvaluator {
 public:
  LabelingEvaluator(const SmallGraph& h, const BoundingSequence& p, const SeriesOptions& opt,
                    std::shared_ptr<const DBlockProvider> d_block)
      : h_(h), p_(p), opt_(opt), labels_(series_labels(p, opt.k_max)),
        w_(std::make_shared<WpzGraphon>(p, std::vector<double>(static_cast<std::size_t>(p.z_dim()), 0.0),
                                        std::move(d_block), ValidateOptions{opt.strict})),
        trunc_{opt.i_max, p.z_dim()} {
    n_ = h.order();
    d_const_.assign(7, true);
    for (int z = 0; z < 7; ++z) {
      std::vector<double> b;
      w_->d_block().breaks(z, b);
      d_const_[static_cast<std::size_t>(z)] = b.empty();
    }
  }

  const std::vector<SeriesLabel>& labels() const { return labels_; }
  const WpzGraphon& graphon() const { return *w_; }

  struct Result {
    double weight = 0.0;
    bool zero = true;
    bool mc = false;
    std::uint64_t samples = 0;
    TruncPoly mean;      // w * E[s * r]
    TruncPoly majorant;  // w * E[s * |r|]
    TruncPoly variance;  // variance of the estimate of `mean`
  };

  Result evaluate(std::uint64_t index) const {
    Result res;
    const auto d = labeling_digits(index, n_, labels_.size());
    double w = 1.0;
    for (auto x : d) w *= labels_[x].measure;
    res.weight = w;
    if (!(w > 0)) return res;

    // Pairs with at least one vertex outside C and E.
    std::vector<std::pair<int, int>> varying;
    double s_const = 1.0;
    bool has_tail = false;
    for (int v = 0; v < n_; ++v) has_tail = has_tail || labels_[d[static_cast<std::size_t>(v)]].tail();
    for (int u = 0; u < n_; ++u)
      for (int v = u + 1; v < n_; ++v) {
        const auto& lu = labels_[d[static_cast<std::size_t>(u)]];
        const auto& lv = labels_[d[static_cast<std::size_t>(v)]];
        if (lu.ce() && lv.ce()) continue;
        const auto c = pair_constant(lu, lv);
        if (c) {
          s_const *= h_.adjacent(u, v) ? *c : 1.0 - *c;
          if (s_const == 0.0) return res;
        } else {
          varying.emplace_back(u, v);
        }
      }

    std::vector<CEState> ce(static_cast<std::size_t>(n_));
    std::vector<SeriesAtom> atoms;
    if (!has_tail) {
      for (int v = 0; v < n_; ++v) ce[static_cast<std::size_t>(v)] = fixed_state(labels_[d[static_cast<std::size_t>(v)]]);
      if (!collect_atoms(ce, atoms)) return res;
      if (varying.empty()) {
        const auto prod = product(atoms);
        res.zero = prod->r.zero();
        res.mean.add(prod->r, w * s_const);
        res.majorant.add(prod->r_abs, w * s_const);
        return res;
      }
    }

    // Monte Carlo over positions of the remaining vertices (and tail coordinates).
    res.mc = true;
    const std::uint64_t m = std::clamp<std::uint64_t>(
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(opt_.samples) * w)), opt_.min_samples,
        opt_.max_samples);
    res.samples = m;
    RandomStream rs(opt_.seed, 0x736572, index);
    std::vector<double> pos(static_cast<std::size_t>(n_));
    std::map<std::vector<SeriesAtom>, std::pair<double, double>> groups;  // S1, S2
    double s1 = 0, s2 = 0;
    for (std::uint64_t j = 0; j < m; ++j) {
      for (int v = 0; v < n_; ++v) {
        const auto& l = labels_[d[static_cast<std::size_t>(v)]];
        double rel;
        if (!l.ce()) {
          rel = l.lo + (l.hi - l.lo) * rs.uniform();
        } else if (l.tail()) {
          int k = opt_.k_max + 1;
          while (k < kMaxCoordDepth && rs.uniform() < 0.5) ++k;
          const double t = rs.uniform();
          rel = std::min((l.third + coord_low(k) + coord_width(k) * t) / 3.0, kBelowOne);
          ce[static_cast<std::size_t>(v)] = CEState{l.kind == SeriesLabel::Kind::C, l.third, k, l.kind == SeriesLabel::Kind::E && l.third == 0 ? 1 : -1};
        } else {
          rel = 0.5 * (l.lo + l.hi);
          ce[static_cast<std::size_t>(v)] = fixed_state(l);
        }
        pos[static_cast<std::size_t>(v)] = wpz::embed(l.part, rel);
      }
      double f = s_const;
      for (const auto& [u, v] : varying) {
        const double x = (*w_)(pos[static_cast<std::size_t>(u)], pos[static_cast<std::size_t>(v)]);
        f *= h_.adjacent(u, v) ? x : 1.0 - x;
        if (f == 0.0) break;
      }
      if (has_tail) {
        atoms.clear();
        if (f == 0.0 || !collect_atoms(ce, atoms)) continue;
        auto& g = groups[atoms];
        g.first += f;
        g.second += f * f;
      } else {
        s1 += f;
        s2 += f * f;
      }
    }
    const double inv = 1.0 / static_cast<double>(m);
    if (!has_tail) {
      const auto prod = product(atoms);
      const double mean = s1 * inv, second = s2 * inv;
      res.zero = s1 == 0.0 || prod->r.zero();
      res.mean.add(prod->r, w * mean);
      res.majorant.add(prod->r_abs, w * mean);
      res.variance.add(prod->r_sq, w * w * std::max(0.0, second - mean * mean) * inv);
      return res;
    }
    TruncPoly mean_poly, second_poly;
    for (const auto& [key, g] : groups) {
      const auto prod = product(key);
      mean_poly.add(prod->r, g.first * inv);
      second_poly.add(prod->r_sq, g.second * inv);
      res.majorant.add(prod->r_abs, w * g.first * inv);
    }
    res.zero = mean_poly.zero();
    res.mean.add(mean_poly, w);
    TruncPoly var = second_poly;
    var.add(multiply(mean_poly, mean_poly, trunc_), -1.0);
    res.variance.add(var, w * w * inv);
    return res;
  }

 private:
  struct CEState {
    bool is_c = false;
    int third = -1;  // -1: not a C/E vertex
    int k = 0;
    int sub = -1;
  };

  static CEState fixed_state(const SeriesLabel& l) {
    if (!l.ce()) return {};
    return {l.kind == SeriesLabel::Kind::C, l.third, l.k, l.sub};
  }

  // Atoms of the conditional agreement probability on the C/E vertices;
  // false when it vanishes.
  bool collect_atoms(const std::vector<CEState>& ce, std::vector<SeriesAtom>& atoms) const {
    std::vector<int> le(static_cast<std::size_t>(n_), 0), ge(static_cast<std::size_t>(n_), 0);
    for (int u = 0; u < n_; ++u)
      for (int v = u + 1; v < n_; ++v) {
        const auto& a = ce[static_cast<std::size_t>(u)];
        const auto& b = ce[static_cast<std::size_t>(v)];
        if (a.third < 0 || b.third < 0) continue;
        const bool edge = h_.adjacent(u, v);
        if (!a.is_c && !b.is_c) {
          if (edge) return false;  // E x E is zero
          continue;
        }
        if (a.third == 2 || b.third == 2 || a.k != b.k) {
          if (edge) return false;
          continue;
        }
        if (a.is_c && b.is_c) {
          const bool same = a.third == b.third;
          atoms.push_back({same == edge ? SeriesAtom::ZM : SeriesAtom::OneMinusZM, a.k});
          continue;
        }
        const auto& c = a.is_c ? a : b;
        const int e = a.is_c ? v : u;
        // Edge with a first-third C vertex: position <= cut; second third: >= cut.
        const bool below = (c.third == 0) == edge;
        (below ? le : ge)[static_cast<std::size_t>(e)] = 1;
      }
    for (int v = 0; v < n_; ++v) {
      const auto& s = ce[static_cast<std::size_t>(v)];
      const bool l = le[static_cast<std::size_t>(v)], g = ge[static_cast<std::size_t>(v)];
      if (!l && !g) continue;
      if (l && g) return false;
      if (s.third == 1) {
        atoms.push_back({l ? SeriesAtom::OneMinusP : SeriesAtom::P, s.k});
        continue;
      }
      // First third, split at l_k and u_k.
      if (s.sub == 0) {
        if (g) return false;
      } else if (s.sub == 2) {
        if (l) return false;
      } else {
        atoms.push_back({l ? SeriesAtom::CondLow : SeriesAtom::CondHigh, s.k});
      }
    }
    std::sort(atoms.begin(), atoms.end());
    return true;
  }

  std::shared_ptr<const Product> product(const std::vector<SeriesAtom>& atoms) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(atoms);
      if (it != cache_.end()) return it->second;
    }
    auto p = std::make_shared<Product>();
    p->r = TruncPoly::constant(1.0);
    p->r_abs = TruncPoly::constant(1.0);
    for (const auto& a : atoms) {
      p->r = multiply(p->r, atom_poly(a, p_, trunc_, false), trunc_);
      p->r_abs = multiply(p->r_abs, atom_poly(a, p_, trunc_, true), trunc_);
    }
    p->r_sq = multiply(p->r, p->r, trunc_);
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(atoms, std::move(p)).first->second;
  }

  // Value of the tile on the two cells when it is constant there.
  std::optional<double> pair_constant(const SeriesLabel& a, const SeriesLabel& b) const {
    using namespace wpz;
    const SeriesLabel* x = &a;
    const SeriesLabel* y = &b;
    if (x->ce() && !y->ce()) std::swap(x, y);
    // Now y is outside C and E.
    auto mid = [](const SeriesLabel& l) { return wpz::embed(l.part, 0.5 * (l.lo + l.hi)); };
    if (y->part == R || x->part == R) {
      if (x->tail() || y->tail()) {
        const SeriesLabel* o = x->part == R ? y : x;
        return o->part == R ? 0.0 : (o->part == Q ? 1.0 : r_constant(o->part));
      }
      return (*w_)(mid(*x), mid(*y));
    }
    if (y->part == Q && x->part == Q) return 1.0;
    if (x->ce()) {
      const bool zero_tile = x->kind == SeriesLabel::Kind::C
                                 ? (y->part == DD || y->part == DE || y->part == DF || y->part == F)
                                 : (is_d(y->part) && y->part != DG) || y->part == F;
      if (zero_tile) return 0.0;
      if (y->part == Q && !x->tail()) return (*w_)(mid(*x), mid(*y));
      return std::nullopt;
    }
    if (is_d(x->part) && is_d(y->part) && x->part != DG && y->part != DG &&
        d_const_[static_cast<std::size_t>(x->part - DA)] && d_const_[static_cast<std::size_t>(y->part - DA)])
      return (*w_)(mid(*x), mid(*y));
    return std::nullopt;
  }

  const SmallGraph& h_;
  const BoundingSequence& p_;
  SeriesOptions opt_;
  std::vector<SeriesLabel> labels_;
  std::shared_ptr<WpzGraphon> w_;
  Truncation trunc_;
  int n_ = 0;
  std::vector<bool> d_const_;
  mutable std::mutex mu_;
  mutable std::map<std::vector<SeriesAtom>, std::shared_ptr<const Product>> cache_;
};

inline MonomialPolynomial to_polynomial(const TruncPoly& p) {
  MonomialPolynomial q;
  for (const auto& [r, v] : p.c)
    if (v != 0.0) q.set(r, v);
  return q;
}

}  // namespace series_detail

// Sum over all labelings of w * s * r, truncated at K_max cells and I_max monomials.
inline TruncatedSeries assemble_series(const SmallGraph& h, const BoundingSequence& p, const SeriesOptions& opt = {},
                                       std::shared_ptr<const DBlockProvider> d_block = default_d_block(),
                                       const std::string& graph_name = "") {
  if (h.order() > 6) throw ValidationError("series expansion supports at most 6 vertices");
  if (opt.i_max < 1) throw ValidationError("I_max must be >= 1");
  require_valid(p, ValidateOptions{opt.strict});
  const BoundingSequence pt = p.truncated(opt.k_max);
  series_detail::LabelingEvaluator ev(h, pt, opt, std::move(d_block));
  const std::uint64_t total = labeling_count(h.order(), ev.labels().size(), opt.max_labelings);
  const std::uint64_t chunk = 512;
  const std::uint64_t chunks = (total + chunk - 1) / chunk;
  struct Partial {
    TruncPoly mean, majorant, variance;
    double weight = 0;
    std::uint64_t nonzero = 0, mc = 0, samples = 0;
  };
  std::vector<Partial> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    Partial& part = parts[c];
    const std::uint64_t end = std::min(total, (c + 1) * chunk);
    for (std::uint64_t i = c * chunk; i < end; ++i) {
      auto r = ev.evaluate(i);
      part.weight += r.weight;
      if (r.mc) {
        ++part.mc;
        part.samples += r.samples;
      }
      if (r.zero) continue;
      ++part.nonzero;
      part.mean.add(r.mean, 1.0);
      part.majorant.add(r.majorant, 1.0);
      part.variance.add(r.variance, 1.0);
    }
  });
  TruncatedSeries s;
  s.graph = graph_name.empty() ? h.to_literal() : graph_name;
  s.vertices = h.order();
  s.k_max = opt.k_max;
  s.i_max = opt.i_max;
  s.bounding = pt;
  s.labelings = total;
  TruncPoly mean, majorant, variance;
  for (const auto& part : parts) {
    mean.add(part.mean, 1.0);
    majorant.add(part.majorant, 1.0);
    variance.add(part.variance, 1.0);
    s.weight_sum += part.weight;
    s.nonzero_labelings += part.nonzero;
    s.mc_labelings += part.mc;
    s.mc_samples += part.samples;
  }
  s.coefficients = series_detail::to_polynomial(mean);
  s.beta = series_detail::to_polynomial(majorant);
  s.variance = series_detail::to_polynomial(variance);
  s.dropped_mass = mean.dropped;
  return s;
}

inline SeriesValue eval_series(const TruncatedSeries& s, std::span<const double> z, bool strict = false) {
  if (static_cast<int>(z.size()) < s.z_dim())
    throw ValidationError("z needs " + std::to_string(s.z_dim()) + " coordinates");
  SeriesValue v;
  v.admissible = s.bounding.admissible(z);
  if (!v.admissible && strict) throw ValidationError("z is outside the feasible region of the bounding sequence");
  v.value = s.coefficients.eval(z);
  v.sigma = std::sqrt(std::max(0.0, s.variance.eval(z)));
  return v;
}

inline double series_partial(const TruncatedSeries& s, std::span<const double> z, int n) {
  return s.coefficients.partial(z, n);
}

// ---------------------------------------------------------------------------
// Coefficient decay

struct DecayReport {
  double c = 0.0;
  double residual = 0.0;
  std::vector<std::pair<int, double>> grades;  // (grade, coefficient mass) used in the fit
  bool trivial = false;
  bool passed = false;

  Json to_json() const {
    Json g = Json::array();
    for (const auto& [n, m] : grades) g.push_back(Json{{"grade", n}, {"mass", m}});
    return Json{{"c", c}, {"residual", residual}, {"trivial", trivial}, {"passed", passed}, {"grades", g}};
  }
};

// Least-squares fit of log(grade mass) = a + n log c over grades n >= 1 whose
// ranks all lie within I_max.
inline DecayReport decay_check(const MonomialPolynomial& coefficients, std::uint64_t i_max) {
  if (i_max < 30) throw ValidationError("decay check needs I_max >= 30");
  const auto& t = PartitionTable::instance();
  std::map<int, double> mass;
  int top = 0;
  while (top + 1 <= PartitionTable::kMaxGrade && t.grade_offset(top + 2) - 1 <= i_max) ++top;
  for (const auto& [r, v] : coefficients.coefficients()) {
    const int g = MultisetCache::at(r).sum();
    if (g >= 1 && g <= top) mass[g] += std::abs(v);
  }
  DecayReport rep;
  for (const auto& [g, m] : mass)
    if (m > 0) rep.grades.emplace_back(g, m);
  if (rep.grades.empty()) {
    rep.trivial = true;
    rep.passed = true;
    return rep;
  }
  if (rep.grades.size() < 2) throw ValidationError("decay check: insufficient nonzero grades");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(rep.grades.size());
  for (const auto& [g, m] : rep.grades) {
    const double x = g, y = std::log(m);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  const double icpt = (sy - slope * sx) / k;
  double ss = 0;
  for (const auto& [g, m] : rep.grades) {
    const double e = std::log(m) - (icpt + slope * g);
    ss += e * e;
  }
  rep.c = std::exp(slope);
  rep.residual = std::sqrt(ss / k);
  rep.passed = rep.c < 1.0;
  return rep;
}

inline DecayReport decay_check(const TruncatedSeries& s) { return decay_check(s.coefficients, s.i_max); }

// alpha_i = c^{Sigma(M_i)} / p(Sigma(M_i)): grade masses are exactly c^n.
inline MonomialPolynomial synthetic_geometric_series(double c, std::uint64_t i_max) {
  MonomialPolynomial p;
  const auto& t = PartitionTable::instance();
  for (std::uint64_t i = 1; i <= i_max; ++i) {
    const int g = MultisetCache::at(i).sum();
    p.set(i, std::pow(c, g) / static_cast<double>(t.partitions(g)));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Closeness under strengthening

// Replaces one trivial triple at an index in (k, max_index] by a random
// admissible one; returns the input when no such index exists.
inline BoundingSequence random_strengthening(const BoundingSequence& p, int k, int max_index, RandomStream& r) {
  std::vector<int> free;
  for (int i = k + 1; i <= max_index; ++i)
    if (p.triple(static_cast<std::uint64_t>(i)).trivial()) free.push_back(i);
  if (free.empty()) return p;
  const int j = free[static_cast<std::size_t>(r.below(free.size()))];
  const double c0 = r.uniform(0.005, 0.02);
  const double c1 = p.z_dim() >= 1 ? r.uniform(-0.9, 0.9) * coefficient_bound(2) : 0.0;
  MonomialPolynomial poly;
  poly.set(1, c0);
  if (c1 != 0.0) poly.set(2, c1);
  const double lo = c0 + std::min(c1, 0.0), hi = c0 + std::max(c1, 0.0);
  BoundingTriple t{poly, std::max(0.0, lo - r.uniform(0.0, 0.005)), std::min(1.0, hi + r.uniform(0.0, 0.005))};
  return strengthen(p, static_cast<std::uint64_t>(j), t);
}

struct StrengtheningDeviation {
  int k = 0;
  double max_bound = 0.0;    // coefficient route, valid on the whole box
  double max_sampled = 0.0;  // on sampled points
};

inline StrengtheningDeviation closeness_under_strengthening(const SmallGraph& h, const BoundingSequence& p, int k,
                                                            int trials, const SeriesOptions& opt,
                                                            std::uint64_t seed) {
  const auto base = assemble_series(h, p, opt);
  StrengtheningDeviation dev;
  dev.k = k;
  RandomStream r(seed, 0x737472, static_cast<std::uint64_t>(k));
  for (int t = 0; t < trials; ++t) {
    const auto q = random_strengthening(p, k, opt.k_max + 2, r);
    if (q == p) continue;
    const auto other = assemble_series(h, q, opt);
    const auto c = epsilon_close(base.coefficients, other.coefficients, p.z_dim(), {200, seed});
    dev.max_bound = std::max(dev.max_bound, c.bound);
    dev.max_sampled = std::max(dev.max_sampled, c.sampled);
  }
  return dev;
}

struct TrendReport {
  std::vector<int> k;
  std::vector<double> mean;
  std::vector<double> se;
  bool non_increasing = true;

  Json to_json() const {
    Json rows = Json::array();
    for (std::size_t i = 0; i < k.size(); ++i) rows.push_back(Json{{"k", k[i]}, {"mean", mean[i]}, {"se", se[i]}});
    return Json{{"rows", rows}, {"non_increasing", non_increasing}};
  }
};

// Replicated deviations for k in [k_lo, k_hi]; the trend passes when each mean
// exceeds its predecessor by at most three combined standard errors.
inline TrendReport strengthening_trend(const SmallGraph& h, const BoundingSequence& p, int k_lo, int k_hi,
                                       int replications, int trials, const SeriesOptions& opt) {
  TrendReport rep;
  for (int k = k_lo; k <= k_hi; ++k) {
    std::vector<double> devs;
    for (int b = 0; b < replications; ++b) {
      SeriesOptions o = opt;
      o.seed = mix64(opt.seed + 0x51 * static_cast<std::uint64_t>(b + 1));
      devs.push_back(closeness_under_strengthening(h, p, k, trials, o, o.seed).max_bound);
    }
    MeanAccumulator acc;
    for (double d : devs) acc.add(d);
    rep.k.push_back(k);
    const auto e = acc.estimate();
    rep.mean.push_back(e.value);
    rep.se.push_back(e.sigma);
  }
  for (std::size_t i = 1; i < rep.k.size(); ++i)
    if (rep.mean[i] > rep.mean[i - 1] + 3.0 * std::hypot(rep.se[i], rep.se[i - 1])) rep.non_increasing = false;
  return rep;
}

}  // namespace graphonforge
