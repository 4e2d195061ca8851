#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "graphonforge/bounding.hpp"
#include "graphonforge/errors.hpp"
#include "graphonforge/graphon.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/rng.hpp"

namespace graphonforge {

// ---------------------------------------------------------------------------
// Part layout: A, B, C, D_A..D_G, E, F, Q, R from left to right. Every part
// has size 1/25 except Q, which has size 12/25.

namespace wpz {

enum PartId : int { A = 0, B, C, DA, DB, DC, DD, DE, DF, DG, E, F, Q, R };
inline constexpr int kParts = 14;
inline constexpr int kInner = 12;  // parts entering the Q normalization

inline const char* part_name(int p) {
  static const char* names[kParts] = {"A",   "B",   "C",   "D_A", "D_B", "D_C", "D_D",
                                      "D_E", "D_F", "D_G", "E",   "F",   "Q",   "R"};
  return names[p];
}

inline int part_from_name(const std::string& s) {
  for (int p = 0; p < kParts; ++p)
    if (s == part_name(p)) return p;
  throw ValidationError("unknown construction part: " + s);
}

inline bool is_d(int p) { return p >= DA && p <= DG; }

inline double part_size(int p) { return p == Q ? 12.0 / 25.0 : 1.0 / 25.0; }
inline double part_start(int p) { return p <= Q ? p / 25.0 : 24.0 / 25.0; }
inline double part_end(int p) { return p == R ? 1.0 : (p == Q ? 24.0 / 25.0 : (p + 1) / 25.0); }

// Global point of relative coordinate r in part p.
inline double embed(int p, double r) { return part_start(p) + r * part_size(p); }

inline int part_of(double x) {
  if (x >= part_start(R)) return R;
  if (x >= part_start(Q)) return Q;
  int p = std::clamp(static_cast<int>(std::floor(25.0 * x)), 0, static_cast<int>(F));
  if (x < part_start(p)) --p;
  else if (p < F && x >= part_start(p + 1)) ++p;
  return std::max(p, 0);
}

inline double relative(int p, double x) {
  return std::clamp((x - part_start(p)) / part_size(p), 0.0, kBelowOne);
}

// Constant of tile X x R for the twelve inner parts, in part order.
inline double r_constant(int p) { return (p + 1) / 25.0; }

// Number of tiles in row p that equal 1[x + y >= 1].
inline int half_tiles_in_row(int p) {
  if (p == A || p == B || is_d(p)) return 1;
  if (p == F) return 10;
  return 0;
}

inline bool half_pair(int x, int y) {
  auto ok = [](int p) { return p == A || p == B || is_d(p) || p == F; };
  return (x == F && ok(y)) || (y == F && ok(x));
}

std::string tile_name(int x, int y);

}  // namespace wpz

inline std::string wpz::tile_name(int x, int y) { return std::string(part_name(x)) + "x" + part_name(y); }

// Deepest coordinate level whose interval boundaries are resolved.
inline constexpr int kMaxCoordDepth = 54;

// Frac part and coordinate of 3r for r in [0,1).
struct ThirdCoord {
  int third;
  int k;
  double frac;  // frac(3r)
};

inline ThirdCoord third_coord(double r) {
  const double s = 3.0 * r;
  const int t = std::clamp(static_cast<int>(std::floor(s)), 0, 2);
  const double f = s - t;
  return {t, coord(f), f};
}

// ---------------------------------------------------------------------------
// The auxiliary kernel placed on the tile D_G x D_G.

class WFKernel {
 public:
  explicit WFKernel(const BoundingSequence* p) : p_(p) {
    for (int a = 0; a < kTable; ++a)
      for (int b = 0; b < kTable; ++b) succ_[a][b] = successor_rule(a + 1, b + 1);
  }

  // M_kx = M_ky minus one copy of its minimum, or M_kx = {min M_ky}.
  static bool successor_rule(std::uint64_t kx, std::uint64_t ky) {
    const Multiset& my = MultisetCache::at(ky);
    if (my.empty()) return false;
    const Multiset& mx = MultisetCache::at(kx);
    return mx == my.without_min() || mx == Multiset{my.min_element()};
  }

  bool successor(int kx, int ky) const {
    if (kx <= kTable && ky <= kTable) return succ_[kx - 1][ky - 1];
    return successor_rule(static_cast<std::uint64_t>(kx), static_cast<std::uint64_t>(ky));
  }

  double operator()(double x, double y) const {
    const ThirdCoord cx = third_coord(x), cy = third_coord(y);
    if (cx.third == 2 && cy.third == 2) return cx.k == cy.k ? p_->triple(cx.k).l : 0.0;
    if (cx.third == 1 && cy.third == 1) return cx.k == cy.k ? 1.0 - p_->triple(cx.k).u : 0.0;
    if (cx.third == 2) return weighted(cx.k, cy.k, cy.third == 0);
    if (cy.third == 2) return weighted(cy.k, cx.k, cx.third == 0);
    // Both in [0, 2/3), not both in [1/3, 2/3).
    const bool x_hi = x >= 1.0 / 6.0 && cx.third == 0;
    const bool y_hi = y >= 1.0 / 6.0 && cy.third == 0;
    if (cx.third == 0 && cy.third == 0) return (x_hi && y_hi && cx.k == cy.k) ? 1.0 : 0.0;
    if (cx.third == 1) return (y_hi && successor(cx.k, cy.k)) ? 1.0 : 0.0;
    return (x_hi && successor(cy.k, cx.k)) ? 1.0 : 0.0;
  }

 private:
  static constexpr int kTable = 64;

  // 9 * 4^j * pi^{+/-}_{i,j}.
  double weighted(int i, int j, bool plus) const {
    const double c = plus ? p_->pi_plus(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j))
                          : p_->pi_minus(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    if (c == 0.0) return 0.0;
    return std::min(1.0, 9.0 * std::ldexp(c, 2 * j));
  }

  const BoundingSequence* p_;
  std::array<std::array<bool, kTable>, kTable> succ_{};
};

// ---------------------------------------------------------------------------
// Kernel on the tiles D_Z x D_Z'.

class DBlockProvider {
 public:
  virtual ~DBlockProvider() = default;
  // z1, z2 in 0..6 (A..G), x and y relative coordinates.
  virtual double value(int z1, int z2, double x, double y) const = 0;
  // Relative coordinates in (0,1) where values may jump along part z.
  virtual void breaks(int /*z*/, std::vector<double>& /*out*/) const {}
  virtual Json to_json() const { return nullptr; }
};

// Step kernel over the concatenated block D_A..D_G, each part of width 1/7.
class StepDBlock final : public DBlockProvider {
 public:
  explicit StepDBlock(std::shared_ptr<const StepGraphon> g, std::string source = "")
      : g_(std::move(g)), source_(std::move(source)) {}

  double value(int z1, int z2, double x, double y) const override {
    return (*g_)((z1 + x) / 7.0, (z2 + y) / 7.0);
  }
  void breaks(int z, std::vector<double>& out) const override {
    for (double b : g_->bounds()) {
      const double r = 7.0 * b - z;
      if (r > 0.0 && r < 1.0) out.push_back(r);
    }
  }
  Json to_json() const override {
    if (!source_.empty()) return source_;
    return g_->to_json();
  }

 private:
  std::shared_ptr<const StepGraphon> g_;
  std::string source_;
};

inline std::shared_ptr<const DBlockProvider> default_d_block() {
  return std::make_shared<StepDBlock>(StepGraphon::constant(0.5));
}

// ---------------------------------------------------------------------------
// The construction graphon.

class WpzGraphon final : public Graphon {
 public:
  WpzGraphon(BoundingSequence p, std::vector<double> z,
             std::shared_ptr<const DBlockProvider> d_block = default_d_block(), const ValidateOptions& check = {})
      : p_(std::make_shared<BoundingSequence>(std::move(p))), z_(std::move(z)),
        d_(d_block ? std::move(d_block) : default_d_block()), wf_(p_.get()) {
    if (static_cast<int>(z_.size()) != p_->z_dim())
      throw ValidationError("z has dimension " + std::to_string(z_.size()) + " but the bounding sequence declares " +
                            std::to_string(p_->z_dim()));
    for (double v : z_)
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("z must lie in [0,1]^N");
    require_valid(*p_, check);
    for (int i = 1; i <= p_->length(); ++i) p_cache_.push_back(p_->p(static_cast<std::uint64_t>(i), z_));
    const std::uint64_t depth = std::min<std::uint64_t>(MultisetCache::kSize, 4096);
    zm_.resize(depth);
    zm_ok_.resize(depth);
    for (std::uint64_t k = 1; k <= depth; ++k) {
      const Multiset& m = MultisetCache::at(k);
      zm_ok_[k - 1] = m.max_element() <= static_cast<int>(z_.size());
      zm_[k - 1] = zm_ok_[k - 1] ? monomial_eval(m, z_) : 0.0;
    }
    for (int x = 0; x < wpz::kParts; ++x) build_breaks(x);
  }

  const BoundingSequence& bounding() const { return *p_; }
  const std::vector<double>& z() const { return z_; }
  const DBlockProvider& d_block() const { return *d_; }
  std::shared_ptr<const DBlockProvider> d_block_ptr() const { return d_; }
  const WFKernel& wf() const { return wf_; }

  std::string kind() const override { return "wpz"; }

  // Largest k such that z^{M_j} is defined for every j <= k.
  int truncation_depth() const {
    int k = 0;
    while (static_cast<std::size_t>(k) < zm_ok_.size() && zm_ok_[static_cast<std::size_t>(k)]) ++k;
    return k;
  }

  // Deepest coordinate level of C whose cells are wider than the given
  // sampling step (in global coordinates).
  static int reachable_coord(double step) {
    if (!(step > 0)) return kMaxCoordDepth;
    const int k = static_cast<int>(std::floor(std::log2(1.0 / (75.0 * step))));
    return std::clamp(k, 0, kMaxCoordDepth);
  }

  double p_value(int k) const {
    return k >= 1 && k <= static_cast<int>(p_cache_.size()) ? p_cache_[static_cast<std::size_t>(k - 1)] : 0.0;
  }
  double l_value(int k) const { return p_->triple(static_cast<std::uint64_t>(k)).l; }
  double u_value(int k) const { return p_->triple(static_cast<std::uint64_t>(k)).u; }

  double z_monomial(int k) const {
    if (k >= 1 && static_cast<std::size_t>(k) <= zm_.size()) {
      if (!zm_ok_[static_cast<std::size_t>(k - 1)])
        throw TruncationError("truncation exceeded: z^{M_" + std::to_string(k) + "} with M_" + std::to_string(k) +
                              " = " + MultisetCache::at(static_cast<std::uint64_t>(k)).to_string() +
                              " needs more than " + std::to_string(z_.size()) + " coordinates");
      return zm_[static_cast<std::size_t>(k - 1)];
    }
    return monomial_eval(unrank(static_cast<std::uint64_t>(k)), z_);
  }

  // Value on tile (px, py) at relative coordinates (x, y).
  double tile(int px, int py, double x, double y) const {
    if (px > py) {
      std::swap(px, py);
      std::swap(x, y);
    }
    return ordered_tile(px, py, x, y);
  }

  double operator()(double gx, double gy) const override {
    const int px = wpz::part_of(gx), py = wpz::part_of(gy);
    return tile(px, py, wpz::relative(px, gx), wpz::relative(py, gy));
  }

  // Value of the tile X x Q, which depends on x only.
  double q_value(int px, double x) const { return (12.0 - row_sum(px, x)) / 12.0; }

  // Sum over the twelve inner parts Y of the relative row integral of X x Y.
  double row_sum(int px, double x) const {
    const auto& t = table(px);
    auto it = std::upper_bound(t.cuts.begin() + 1, t.cuts.end() - 1, x);
    const std::size_t i = static_cast<std::size_t>(it - (t.cuts.begin() + 1));
    return t.constant[i] + wpz::half_tiles_in_row(px) * x;
  }

  // Integral over relative y in [a, b) of tile (px, py) at relative x.
  double tile_row_integral(int px, int py, double x, double a, double b) const {
    if (!(b > a)) return 0.0;
    using namespace wpz;
    if (px == C && py == C) return cc_row(x, a, b);
    if (px == C && py == E) return ce_row(x, a, b);
    if (py == R || px == R) {
      if (px == R && py == R) return 0.0;
      const int other = px == R ? py : px;
      return (b - a) * (other == Q ? 1.0 : r_constant(other));
    }
    if (py == Q) {
      if (px == Q) return b - a;
      return (b - a) * q_value(px, x);
    }
    if (px == Q) {
      if (py == R) return b - a;
      // (12 - S_Y(y)) / 12 is linear on each table piece: the midpoint rule is exact.
      const auto& t = table(py);
      double s = 0;
      for (std::size_t i = 0; i + 1 < t.cuts.size(); ++i) {
        const double lo = std::max(a, t.cuts[i]), hi = std::min(b, t.cuts[i + 1]);
        if (hi > lo) s += (hi - lo) * (12.0 - (t.constant[i] + half_tiles_in_row(py) * 0.5 * (lo + hi))) / 12.0;
      }
      return s;
    }
    return piecewise_row(px, py, x, a, b);
  }

  // Integral of the full row over relative [0,1) of part py.
  double full_tile_row(int px, int py, double x) const { return tile_row_integral(px, py, x, 0.0, 1.0); }

  bool has_exact_rows() const override { return true; }
  double row_integral_exact(double gx, double a, double b) const override {
    const int px = wpz::part_of(gx);
    const double x = wpz::relative(px, gx);
    double s = 0;
    for (int py = 0; py < wpz::kParts; ++py) {
      const double lo = std::max(a, wpz::part_start(py)), hi = std::min(b, wpz::part_end(py));
      if (!(hi > lo)) continue;
      const double size = wpz::part_size(py);
      const double ra = py == wpz::part_of(lo) ? wpz::relative(py, lo) : 0.0;
      const double rb = hi >= wpz::part_end(py) ? 1.0 : (hi - wpz::part_start(py)) / size;
      s += size * tile_row_integral(px, py, x, ra, rb);
    }
    return s;
  }

  bool structured() const override { return true; }
  void row_breakpoints(double gx, double a, double b, std::vector<double>& out) const override {
    const int px = wpz::part_of(gx);
    const double x = wpz::relative(px, gx);
    for (int py = 0; py < wpz::kParts; ++py) {
      const double s = wpz::part_start(py), e = wpz::part_end(py);
      if (e <= a || s >= b) continue;
      auto push = [&](double r) {
        const double g = wpz::embed(py, r);
        if (g > a && g < b) out.push_back(g);
      };
      push(0.0);
      if (py != wpz::R) push(1.0);
      if (py == wpz::Q || py == wpz::R || px == wpz::R) continue;
      for (double r : breaks_[static_cast<std::size_t>(py)]) push(r);
      if (wpz::half_pair(px, py)) push(1.0 - x);
    }
  }

  Partition partition() const override {
    std::vector<NamedPart> parts;
    for (int p = 0; p < wpz::kParts; ++p)
      parts.push_back({wpz::part_name(p), IntervalSet{{wpz::part_start(p), wpz::part_end(p)}}});
    return Partition(std::move(parts));
  }

  Json to_json() const override {
    return Json{{"kind", "wpz"}, {"bounding", p_->to_json()}, {"z", z_}, {"d_block", d_->to_json()}};
  }

  // Sorted relative breakpoints of part p (without 0 and 1).
  const std::vector<double>& breaks(int p) const { return breaks_[static_cast<std::size_t>(p)]; }

 private:
  struct RowTable {
    std::vector<double> cuts;      // 0 = c_0 < ... < c_m = 1
    std::vector<double> constant;  // S_X(x) - f_X x on [c_i, c_{i+1})
  };

  double ordered_tile(int px, int py, double x, double y) const {
    using namespace wpz;
    if (py == R) return px == R ? 0.0 : (px == Q ? 1.0 : r_constant(px));
    if (py == Q) return px == Q ? 1.0 : q_value(px, x);
    if (py == F) {
      if (px == C || px == E) return 0.0;
      return x + y >= 1.0 ? 1.0 : 0.0;
    }
    if (px == A) return third_of(x) == third_of(y) ? 1.0 : 0.0;
    if (px == B) {
      const ThirdCoord cx = third_coord(x), cy = third_coord(y);
      return (cx.third == cy.third && cx.k == cy.k) ? 1.0 : 0.0;
    }
    if (px == C) {
      switch (py) {
        case C: return cc_value(x, y);
        case DA: {
          const ThirdCoord cx = third_coord(x), cy = third_coord(y);
          return (cx.third == 0 && cy.third == 1 && cx.k == cy.k) ? 1.0 : 0.0;
        }
        case DB: {
          const ThirdCoord cx = third_coord(x), cy = third_coord(y);
          return (cx.third == 0 && cy.third == 2 && cx.k == cy.k) ? 1.0 : 0.0;
        }
        case DC: return (x < 1.0 / 6.0 && y < 1.0 / 6.0) ? 1.0 : 0.0;
        case DG: {
          const bool in = (x < 1.0 / 3.0 && y < 2.0 / 3.0) || (x < 2.0 / 3.0 && y >= 2.0 / 3.0);
          return in ? wf_(x, y) : 0.0;
        }
        case E: return ce_value(x, y);
        default: return 0.0;
      }
    }
    if (is_d(px)) {
      if (is_d(py)) return (px == DG && py == DG) ? wf_(x, y) : d_->value(px - DA, py - DA, x, y);
      if (py == E) return px == DG ? dge_value(x, y) : 0.0;
      return 0.0;
    }
    return 0.0;  // E x E
  }

  double cc_value(double x, double y) const {
    const ThirdCoord cx = third_coord(x), cy = third_coord(y);
    if (cx.third == 2 || cy.third == 2 || cx.k != cy.k) return 0.0;
    const double v = z_monomial(cx.k);
    return cx.third == cy.third ? v : 1.0 - v;
  }

  // x in C, y in E: position of frac(3y) inside its coordinate interval
  // compared against p, in the form frac(3y) <= low + width * p.
  double ce_value(double x, double y) const {
    const ThirdCoord cx = third_coord(x), cy = third_coord(y);
    if (cx.third == 2 || cy.third == 2 || cx.k != cy.k) return 0.0;
    const double lo = coord_low(cx.k), w = coord_width(cx.k), p = p_value(cx.k);
    const double cut = lo + w * (cy.third == 0 ? p : 1.0 - p);
    const bool below = cy.frac <= cut;
    const bool above = cy.frac >= cut;
    return (cx.third == 0 ? below : above) ? 1.0 : 0.0;
  }

  // x in D_G, y in E.
  double dge_value(double x, double y) const {
    const ThirdCoord cx = third_coord(x), cy = third_coord(y);
    if (cy.third != 0 || cx.third == 0 || cx.k != cy.k) return 0.0;
    const double bound = cx.third == 1 ? u_value(cx.k) : l_value(cx.k);
    return cy.frac <= coord_low(cx.k) + coord_width(cx.k) * bound ? 1.0 : 0.0;
  }

  static double overlap(double a, double b, double lo, double hi) {
    const double l = std::max(a, lo), h = std::min(b, hi);
    return h > l ? h - l : 0.0;
  }

  // C x C row: nonzero only on the two cells of x's coordinate in thirds 0, 1.
  double cc_row(double x, double a, double b) const {
    const ThirdCoord cx = third_coord(x);
    if (cx.third == 2) return 0.0;
    const double lo = coord_low(cx.k), w = coord_width(cx.k);
    const double m0 = overlap(a, b, lo / 3.0, (lo + w) / 3.0);
    const double m1 = overlap(a, b, (1.0 + lo) / 3.0, (1.0 + lo + w) / 3.0);
    if (m0 == 0.0 && m1 == 0.0) return 0.0;
    if (a <= 0.0 && b >= 1.0) return w / 3.0;  // z-free: v + (1 - v)
    const double v = z_monomial(cx.k);
    const double same = cx.third == 0 ? m0 : m1, other = cx.third == 0 ? m1 : m0;
    return same * v + other * (1.0 - v);
  }

  double ce_row(double x, double a, double b) const {
    const ThirdCoord cx = third_coord(x);
    if (cx.third == 2) return 0.0;
    const double lo = coord_low(cx.k), w = coord_width(cx.k);
    if (a <= 0.0 && b >= 1.0) return w / 3.0;
    const double p = p_value(cx.k);
    const double c0 = lo + w * p, c1 = lo + w * (1.0 - p);
    if (cx.third == 0)
      return overlap(a, b, lo / 3.0, c0 / 3.0) + overlap(a, b, (1.0 + lo) / 3.0, (1.0 + c1) / 3.0);
    return overlap(a, b, c0 / 3.0, (lo + w) / 3.0) + overlap(a, b, (1.0 + c1) / 3.0, (1.0 + lo + w) / 3.0);
  }

  // Midpoint rule on the pieces of the breakpoint set; exact for tiles that
  // are constant between breakpoints.
  double piecewise_row(int px, int py, double x, double a, double b) const {
    const auto& br = breaks_[static_cast<std::size_t>(py)];
    double half_cut = -1.0;
    if (wpz::half_pair(px, py)) half_cut = 1.0 - x;
    double s = 0, lo = a;
    auto it = std::upper_bound(br.begin(), br.end(), a);
    auto piece = [&](double l, double h) {
      if (!(h > l)) return;
      if (half_cut > l && half_cut < h) {
        s += (half_cut - l) * tile(px, py, x, 0.5 * (l + half_cut));
        s += (h - half_cut) * tile(px, py, x, 0.5 * (half_cut + h));
      } else {
        s += (h - l) * tile(px, py, x, 0.5 * (l + h));
      }
    };
    for (; it != br.end() && *it < b; ++it) {
      piece(lo, *it);
      lo = *it;
    }
    piece(lo, b);
    return s;
  }

  void build_breaks(int p) {
    std::vector<double> out;
    if (p == wpz::Q || p == wpz::R) {
      breaks_[static_cast<std::size_t>(p)] = out;
      return;
    }
    out.push_back(1.0 / 6.0);
    for (int t = 0; t < 3; ++t)
      for (int k = 1; k <= kMaxCoordDepth; ++k) out.push_back((t + coord_low(k)) / 3.0);
    if (p == wpz::E) {
      for (int k = 1; k <= std::min(p_->length(), kMaxCoordDepth); ++k) {
        const double lo = coord_low(k), w = coord_width(k);
        const double pk = p_value(k);
        out.push_back((lo + w * pk) / 3.0);
        out.push_back((1.0 + lo + w * (1.0 - pk)) / 3.0);
        out.push_back((lo + w * l_value(k)) / 3.0);
        out.push_back((lo + w * u_value(k)) / 3.0);
      }
    }
    if (wpz::is_d(p)) d_->breaks(p - wpz::DA, out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    out.erase(std::remove_if(out.begin(), out.end(), [](double v) { return !(v > 0.0 && v < 1.0); }), out.end());
    breaks_[static_cast<std::size_t>(p)] = std::move(out);
  }

  const RowTable& table(int px) const {
    const std::size_t i = static_cast<std::size_t>(px);
    std::call_once(table_once_[i], [&] {
      RowTable t;
      t.cuts.push_back(0.0);
      for (double c : breaks_[i]) t.cuts.push_back(c);
      t.cuts.push_back(1.0);
      t.constant.resize(t.cuts.size() - 1);
      for (std::size_t j = 0; j + 1 < t.cuts.size(); ++j) {
        const double mid = 0.5 * (t.cuts[j] + t.cuts[j + 1]);
        double s = 0;
        for (int py = 0; py < wpz::kInner; ++py) s += full_tile_row(px, py, mid);
        t.constant[j] = s - wpz::half_tiles_in_row(px) * mid;
      }
      tables_[i] = std::move(t);
    });
    return tables_[i];
  }

  std::shared_ptr<BoundingSequence> p_;
  std::vector<double> z_;
  std::shared_ptr<const DBlockProvider> d_;
  WFKernel wf_;
  std::vector<double> p_cache_;
  std::vector<double> zm_;
  std::vector<char> zm_ok_;
  std::array<std::vector<double>, wpz::kParts> breaks_;
  mutable std::array<std::once_flag, wpz::kParts> table_once_;
  mutable std::array<RowTable, wpz::kParts> tables_;
};

using WpzPtr = std::shared_ptr<const WpzGraphon>;

inline WpzPtr build_wpz(const BoundingSequence& p, const std::vector<double>& z,
                        std::shared_ptr<const DBlockProvider> d_block = default_d_block(),
                        const ValidateOptions& check = {}) {
  return std::make_shared<WpzGraphon>(p, z, std::move(d_block), check);
}

// d_block entry: null, a path to a step graphon spec, or an inline spec.
inline std::shared_ptr<const DBlockProvider> load_d_block(const Json& j) {
  if (j.is_null()) return default_d_block();
  if (j.is_string()) {
    const std::string path = j.get<std::string>();
    const Json spec = read_json_file(path);
    if (spec.value("kind", std::string("step")) != "step") throw ValidationError("d_block must be a step graphon");
    return std::make_shared<StepDBlock>(StepGraphon::from_json(spec), path);
  }
  if (j.is_object()) return std::make_shared<StepDBlock>(StepGraphon::from_json(j));
  throw ValidationError("d_block must be null, a path or a step graphon spec");
}

inline WpzPtr wpz_from_json(const Json& j, const ValidateOptions& check = {}) {
  if (!j.is_object() || j.value("kind", std::string()) != "wpz") throw ValidationError("not a wpz graphon spec");
  if (!j.contains("bounding") || !j.contains("z")) throw ValidationError("wpz spec needs 'bounding' and 'z'");
  const Json& b = j.at("bounding");
  const BoundingSequence p = BoundingSequence::from_json(b.is_string() ? read_json_file(b.get<std::string>()) : b);
  std::vector<double> z;
  try {
    z = j.at("z").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("wpz spec: bad z vector: ") + e.what());
  }
  return build_wpz(p, z, load_d_block(j.value("d_block", Json(nullptr))), check);
}

// ---------------------------------------------------------------------------
// Recovering z from values on the C x C tile.

struct DecodeOptions {
  double tolerance = 1e-6;
};

// Reads z_i on the cells of coordinate j with M_j = {i}: the same-third
// readings and one minus the cross-third reading must agree, and the
// structurally zero cells must read 0.
inline std::vector<double> decode_z(const Graphon& w, int n, const DecodeOptions& opt = {}) {
  using namespace wpz;
  std::vector<double> z;
  auto at = [&](double rx, double ry) { return w(embed(C, rx), embed(C, ry)); };
  for (int i = 1; i <= n; ++i) {
    const int j = static_cast<int>(rank(Multiset{i}));
    const double lo = coord_low(j), width = coord_width(j);
    auto cell = [&](int third, double frac_in_cell) { return (third + lo + width * frac_in_cell) / 3.0; };
    const double same0 = at(cell(0, 0.25), cell(0, 0.75));
    const double same1 = at(cell(1, 0.3), cell(1, 0.6));
    const double cross = 1.0 - at(cell(0, 0.5), cell(1, 0.5));
    const double lo_r = std::min({same0, same1, cross}), hi_r = std::max({same0, same1, cross});
    // Zero cells: different coordinates, and the last third.
    const double nlo = coord_low(j + 1), nw = coord_width(j + 1);
    const double zero_a = at(cell(0, 0.5), (nlo + 0.5 * nw) / 3.0);
    const double zero_b = at(cell(2, 0.25), cell(2, 0.75));
    const double zero_dev = std::max(std::abs(zero_a), std::abs(zero_b));
    if (hi_r - lo_r > opt.tolerance || zero_dev > opt.tolerance || lo_r < -opt.tolerance ||
        hi_r > 1.0 + opt.tolerance)
      throw ValidationError("inconsistent block readings for z_" + std::to_string(i) + " (spread " +
                            format_number(hi_r - lo_r) + ", zero-cell deviation " + format_number(zero_dev) + ")");
    z.push_back(same0);
  }
  return z;
}

struct DiffReport {
  std::map<std::string, std::uint64_t> tiles;  // tile id -> differing samples
  std::uint64_t samples = 0;
  std::uint64_t differing = 0;
};

// Tiles where the two kernels differ at uniformly sampled pairs.
inline DiffReport diff_support(const Graphon& w1, const Graphon& w2, std::uint64_t samples, std::uint64_t seed) {
  const std::uint64_t chunks = (samples + kChunkSize - 1) / kChunkSize;
  std::vector<std::map<std::string, std::uint64_t>> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    RandomStream r(seed, 0x64696666, c);
    const std::uint64_t end = std::min(samples, (c + 1) * kChunkSize);
    for (std::uint64_t s = c * kChunkSize; s < end; ++s) {
      const double x = r.uniform(), y = r.uniform();
      if (w1(x, y) != w2(x, y)) ++parts[c][wpz::tile_name(wpz::part_of(x), wpz::part_of(y))];
    }
  });
  DiffReport rep;
  rep.samples = samples;
  for (const auto& m : parts)
    for (const auto& [k, v] : m) {
      rep.tiles[k] += v;
      rep.differing += v;
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Degrees per part

struct PartDegree {
  std::string name;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double spread() const { return max - min; }
};

inline std::vector<PartDegree> part_degree_profile(const WpzGraphon& w, std::uint64_t samples_per_part,
                                                   std::uint64_t seed, const QuadratureSpec& q = {}) {
  std::vector<PartDegree> out(wpz::kParts);
  parallel_for(wpz::kParts, [&](std::size_t p) {
    RandomStream r(seed, 0x646567, p);
    PartDegree d;
    d.name = wpz::part_name(static_cast<int>(p));
    d.min = 1e300;
    d.max = -1e300;
    double total = 0;
    for (std::uint64_t s = 0; s < samples_per_part; ++s) {
      const double x = wpz::embed(static_cast<int>(p), r.uniform());
      const double v = degree(w, x, q).value;
      total += v;
      d.min = std::min(d.min, v);
      d.max = std::max(d.max, v);
    }
    d.mean = samples_per_part ? total / static_cast<double>(samples_per_part) : 0.0;
    out[p] = d;
  });
  return out;
}

// Degree of an inner part implied by the construction: 12/25 + r_X / 25.
inline double construction_degree(int p) {
  if (p < wpz::kInner) return 12.0 / 25.0 + wpz::r_constant(p) / 25.0;
  if (p == wpz::R) {
    double s = 12.0 / 25.0;
    for (int x = 0; x < wpz::kInner; ++x) s += wpz::r_constant(x) / 25.0;
    return s;
  }
  return std::nan("");
}

// Tabulated part degrees (numerators over 2500).
inline double tabulated_degree(int p) {
  if (p < wpz::kInner) return (1201.0 + p) / 2500.0;
  if (p == wpz::R) return 1278.0 / 2500.0;
  return 1300.0 / 2500.0;  // lower bound for Q
}


// ---------------------------------------------------------------------------
// Graphon specs: {"kind": "step" | "half" | "wpz", ...}

inline GraphonPtr graphon_from_json(const Json& j, const ValidateOptions& check = {}) {
  if (!j.is_object()) throw ValidationError("graphon spec must be a JSON object");
  const std::string kind = j.value("kind", std::string("step"));
  if (kind == "step") return StepGraphon::from_json(j);
  if (kind == "half") return std::make_shared<HalfGraphon>();
  if (kind == "wpz") return wpz_from_json(j, check);
  throw ValidationError("unknown graphon kind '" + kind + "'");
}

// Command-line form: "const:p", "half", inline JSON, or a path to a spec file.
inline GraphonPtr graphon_from_arg(const std::string& arg, const ValidateOptions& check = {}) {
  if (arg.rfind("const:", 0) == 0) {
    double p = 0;
    try {
      std::size_t used = 0;
      p = std::stod(arg.substr(6), &used);
      if (used != arg.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("bad constant graphon '" + arg + "'");
    }
    return StepGraphon::constant(p);
  }
  if (arg == "half") return std::make_shared<HalfGraphon>();
  if (!arg.empty() && arg.front() == '{') return graphon_from_json(parse_json_text(arg), check);
  return graphon_from_json(read_json_file(arg), check);
}

}  // namespace graphonforge
