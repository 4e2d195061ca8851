#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "graphonforge/errors.hpp"
#include "graphonforge/graphon.hpp"
#include "graphonforge/rng.hpp"

namespace graphonforge {

// Simple undirected graph on at most 10 vertices.
class SmallGraph {
 public:
  static constexpr int kMaxVertices = 10;

  SmallGraph() = default;
  explicit SmallGraph(int n) : n_(n) {
    if (n < 0 || n > kMaxVertices) throw ValidationError("small graphs support at most 10 vertices");
  }
  SmallGraph(int n, const std::vector<std::pair<int, int>>& edges) : SmallGraph(n) {
    for (auto [u, v] : edges) add_edge(u, v);
  }

  int order() const { return n_; }

  void add_edge(int u, int v) {
    if (u < 0 || v < 0 || u >= n_ || v >= n_) throw ValidationError("edge endpoint out of range");
    if (u == v) throw ValidationError("loops are not allowed");
    adj_[u] |= static_cast<std::uint16_t>(1u << v);
    adj_[v] |= static_cast<std::uint16_t>(1u << u);
  }

  bool adjacent(int u, int v) const { return (adj_[u] >> v) & 1u; }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int u = 0; u < n_; ++u)
      for (int v = u + 1; v < n_; ++v)
        if (adjacent(u, v)) out.emplace_back(u, v);
    return out;
  }

  std::size_t edge_count() const { return edges().size(); }

  // Bit (index of pair (u,v) in lexicographic order) set iff u~v.
  std::uint64_t pair_mask() const {
    std::uint64_t m = 0;
    int bit = 0;
    for (int u = 0; u < n_; ++u)
      for (int v = u + 1; v < n_; ++v, ++bit)
        if (adjacent(u, v)) m |= std::uint64_t{1} << bit;
    return m;
  }

  static SmallGraph from_pair_mask(int n, std::uint64_t mask) {
    SmallGraph g(n);
    int bit = 0;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v, ++bit)
        if ((mask >> bit) & 1u) g.add_edge(u, v);
    return g;
  }

  SmallGraph permuted(const std::vector<int>& perm) const {
    SmallGraph g(n_);
    for (auto [u, v] : edges()) g.add_edge(perm[u], perm[v]);
    return g;
  }

  bool operator==(const SmallGraph& o) const { return n_ == o.n_ && adj_ == o.adj_; }

  // Literals: K3, P4, C5, E2 (edgeless), edges:0-1,1-2 with optional @n.
  static SmallGraph parse(const std::string& text) {
    auto number = [&](const std::string& s) {
      if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw ValidationError("bad graph literal: " + text);
      return std::stoi(s);
    };
    if (text.rfind("edges:", 0) == 0) {
      std::string body = text.substr(6);
      int n = -1;
      if (auto at = body.find('@'); at != std::string::npos) {
        n = number(body.substr(at + 1));
        body = body.substr(0, at);
      }
      std::vector<std::pair<int, int>> edges;
      int max_v = -1;
      std::size_t pos = 0;
      while (pos < body.size()) {
        auto comma = body.find(',', pos);
        std::string tok = body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        auto dash = tok.find('-');
        if (dash == std::string::npos) throw ValidationError("bad edge token in graph literal: " + tok);
        const int u = number(tok.substr(0, dash)), v = number(tok.substr(dash + 1));
        edges.emplace_back(u, v);
        max_v = std::max({max_v, u, v});
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      if (n < 0) n = max_v + 1;
      return SmallGraph(n, edges);
    }
    if (text.size() < 2) throw ValidationError("bad graph literal: " + text);
    const char kind = text[0];
    const int n = number(text.substr(1));
    SmallGraph g(n);
    switch (kind) {
      case 'K':
        for (int u = 0; u < n; ++u)
          for (int v = u + 1; v < n; ++v) g.add_edge(u, v);
        break;
      case 'P':
        for (int u = 0; u + 1 < n; ++u) g.add_edge(u, u + 1);
        break;
      case 'C':
        if (n < 3) throw ValidationError("cycles need at least 3 vertices");
        for (int u = 0; u < n; ++u) g.add_edge(u, (u + 1) % n);
        break;
      case 'E':
        break;
      default:
        throw ValidationError("bad graph literal: " + text);
    }
    return g;
  }

  std::string to_literal() const {
    std::string s = "edges:";
    bool first = true;
    for (auto [u, v] : edges()) {
      if (!first) s += ',';
      first = false;
      s += std::to_string(u) + "-" + std::to_string(v);
    }
    return s + "@" + std::to_string(n_);
  }

 private:
  int n_ = 0;
  std::array<std::uint16_t, kMaxVertices> adj_{};
};

// |Aut(H)| by checking every permutation.
inline std::uint64_t aut_count(const SmallGraph& h) {
  const int n = h.order();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  const auto edges = h.edges();
  std::uint64_t count = 0;
  do {
    bool ok = true;
    for (auto [u, v] : edges)
      if (!h.adjacent(perm[u], perm[v])) {
        ok = false;
        break;
      }
    if (ok) ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return count;
}

inline double factorial(int n) {
  double f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Smallest pair mask over all relabelings.
inline std::uint64_t canonical_mask(const SmallGraph& h) {
  const int n = h.order();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t best = ~std::uint64_t{0};
  do {
    best = std::min(best, h.permuted(perm).pair_mask());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// One representative per isomorphism class on k <= 5 vertices, ordered by
// canonical mask.
inline std::vector<SmallGraph> isomorphism_classes(int k) {
  if (k < 0 || k > 5) throw ValidationError("isomorphism class enumeration supports k <= 5");
  const int pairs = k * (k - 1) / 2;
  std::map<std::uint64_t, SmallGraph> reps;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << pairs); ++m) {
    const SmallGraph g = SmallGraph::from_pair_mask(k, m);
    const std::uint64_t c = canonical_mask(g);
    if (!reps.count(c)) reps.emplace(c, SmallGraph::from_pair_mask(k, c));
  }
  std::vector<SmallGraph> out;
  for (auto& [c, g] : reps) out.push_back(g);
  return out;
}

// ---------------------------------------------------------------------------
// Induced labeled densities

enum class DensityMethod { Auto, Exact, MonteCarlo };

struct DensityOptions {
  DensityMethod method = DensityMethod::Auto;
  std::uint64_t samples = 1000000;
  std::uint64_t seed = 0;
  std::uint64_t exact_budget = 100000000;  // assignments k^n
};

namespace detail {

inline double pair_factor(bool edge, double w) { return edge ? w : 1.0 - w; }

inline std::uint64_t checked_power(std::uint64_t base, int exp, std::uint64_t budget) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && r > budget / base) return budget + 1;
    r *= base;
  }
  return r;
}

}  // namespace detail

// Exact induced density: sum over part assignments of part-size products times
// W on edges and 1 - W on non-edges.
inline double tau_exact_step(const SmallGraph& h, const StepGraphon& w,
                             std::uint64_t budget = 100000000) {
  const int n = h.order();
  const std::size_t k = w.parts();
  if (n == 0) return 1.0;
  if (detail::checked_power(k, n, budget) > budget)
    throw BudgetError("exact density needs more than " + std::to_string(budget) + " assignments");
  std::vector<double> by_first(k, 0.0);
  parallel_for(k, [&](std::size_t first) {
    std::vector<std::size_t> assign(static_cast<std::size_t>(n), 0);
    assign[0] = first;
    double total = 0;
    auto rec = [&](auto&& self, int v, double weight) -> void {
      if (weight == 0.0) return;
      if (v == n) {
        total += weight;
        return;
      }
      for (std::size_t p = 0; p < k; ++p) {
        assign[v] = p;
        double f = weight * w.sizes()[p];
        for (int u = 0; u < v && f != 0.0; ++u)
          f *= detail::pair_factor(h.adjacent(u, v), w.value(assign[u], p));
        self(self, v + 1, f);
      }
    };
    rec(rec, 1, w.sizes()[first]);
    by_first[first] = total;
  });
  double total = 0;
  for (double v : by_first) total += v;
  return total;
}

inline Estimate tau_monte_carlo(const SmallGraph& h, const Graphon& w, std::uint64_t samples,
                                std::uint64_t seed) {
  if (samples == 0) throw BudgetError("Monte Carlo density needs a positive sample budget");
  const int n = h.order();
  if (n == 0) return {1.0, 0.0};
  return monte_carlo(samples, seed, 0x746175, [&](RandomStream& r) {
    std::array<double, SmallGraph::kMaxVertices> x{};
    for (int i = 0; i < n; ++i) x[i] = r.uniform();
    double f = 1.0;
    for (int u = 0; u < n && f != 0.0; ++u)
      for (int v = u + 1; v < n; ++v) f *= detail::pair_factor(h.adjacent(u, v), w(x[u], x[v]));
    return f;
  });
}

inline Estimate tau(const SmallGraph& h, const Graphon& w, const DensityOptions& opt = {}) {
  const auto* step = dynamic_cast<const StepGraphon*>(&w);
  switch (opt.method) {
    case DensityMethod::Exact:
      if (!step) throw ValidationError("exact density requires a step graphon");
      return {tau_exact_step(h, *step, opt.exact_budget), 0.0};
    case DensityMethod::MonteCarlo:
      return tau_monte_carlo(h, w, opt.samples, opt.seed);
    case DensityMethod::Auto:
    default:
      if (step && detail::checked_power(step->parts(), h.order(), opt.exact_budget) <= opt.exact_budget)
        return {tau_exact_step(h, *step, opt.exact_budget), 0.0};
      return tau_monte_carlo(h, w, opt.samples, opt.seed);
  }
}

// d(H, W) = tau(H, W) * n! / |Aut(H)|.
inline Estimate density(const SmallGraph& h, const Graphon& w, const DensityOptions& opt = {}) {
  const double scale = factorial(h.order()) / static_cast<double>(aut_count(h));
  const auto t = tau(h, w, opt);
  return {t.value * scale, t.sigma * scale};
}

// Fraction of vertex subsets of g inducing a copy of h.
inline double empirical_density(const SmallGraph& h, const EdgeListGraph& g) {
  const int k = h.order();
  const std::size_t n = g.n;
  if (static_cast<std::size_t>(k) > n) return 0.0;
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (auto [u, v] : g.edges) adj[u][v] = adj[v][u] = true;
  const std::uint64_t target = canonical_mask(h);
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  std::uint64_t hits = 0, total = 0;
  std::map<std::uint64_t, std::uint64_t> canon_cache;
  for (;;) {
    std::uint64_t mask = 0;
    int bit = 0;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b, ++bit)
        if (adj[idx[a]][idx[b]]) mask |= std::uint64_t{1} << bit;
    auto it = canon_cache.find(mask);
    if (it == canon_cache.end())
      it = canon_cache.emplace(mask, canonical_mask(SmallGraph::from_pair_mask(k, mask))).first;
    if (it->second == target) ++hits;
    ++total;
    int i = k - 1;
    while (i >= 0 && idx[i] == n - static_cast<std::size_t>(k - i)) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Decorated graphs

enum class PairSpec : std::uint8_t { Free, Edge, NonEdge };

// Rooted graph whose first `roots` vertices are roots; every vertex carries the
// name of a part. Pairs left Free contribute a factor of 1.
class DecoratedGraph {
 public:
  DecoratedGraph() = default;
  DecoratedGraph(int n, int roots, std::vector<std::string> decorations)
      : n_(n), roots_(roots), deco_(std::move(decorations)),
        pairs_(static_cast<std::size_t>(n * n), PairSpec::Free) {
    if (n < 0 || n > SmallGraph::kMaxVertices) throw ValidationError("decorated graphs support at most 10 vertices");
    if (roots < 0 || roots > n) throw ValidationError("root count exceeds vertex count");
    if (deco_.size() != static_cast<std::size_t>(n)) throw ValidationError("one decoration per vertex required");
  }

  // Every pair specified as edge or non-edge according to h.
  static DecoratedGraph from_graph(const SmallGraph& h, int roots, std::vector<std::string> decorations) {
    DecoratedGraph g(h.order(), roots, std::move(decorations));
    for (int u = 0; u < h.order(); ++u)
      for (int v = u + 1; v < h.order(); ++v) g.set(u, v, h.adjacent(u, v) ? PairSpec::Edge : PairSpec::NonEdge);
    return g;
  }

  int order() const { return n_; }
  int roots() const { return roots_; }
  const std::string& decoration(int v) const { return deco_[v]; }
  const std::vector<std::string>& decorations() const { return deco_; }

  void set(int u, int v, PairSpec s) {
    if (u < 0 || v < 0 || u >= n_ || v >= n_ || u == v) throw ValidationError("invalid vertex pair");
    pairs_[u * n_ + v] = pairs_[v * n_ + u] = s;
  }
  PairSpec at(int u, int v) const { return pairs_[u * n_ + v]; }

  // Same root count, root decorations and root-pair specifications.
  bool compatible_with(const DecoratedGraph& o) const {
    if (roots_ != o.roots_) return false;
    for (int i = 0; i < roots_; ++i) {
      if (deco_[i] != o.deco_[i]) return false;
      for (int j = i + 1; j < roots_; ++j)
        if (at(i, j) != o.at(i, j)) return false;
    }
    return true;
  }

  bool operator==(const DecoratedGraph& o) const {
    return n_ == o.n_ && roots_ == o.roots_ && deco_ == o.deco_ && pairs_ == o.pairs_;
  }

 private:
  int n_ = 0;
  int roots_ = 0;
  std::vector<std::string> deco_;
  std::vector<PairSpec> pairs_;
};

struct PartitionedGraphon {
  GraphonPtr graphon;
  Partition partition;

  static PartitionedGraphon from(GraphonPtr w) {
    Partition p = w->partition();
    return {std::move(w), std::move(p)};
  }
};

namespace detail {

inline double spec_factor(PairSpec s, double w) {
  switch (s) {
    case PairSpec::Edge: return w;
    case PairSpec::NonEdge: return 1.0 - w;
    default: return 1.0;
  }
}

// Overlap of an interval set with [lo, hi).
inline double overlap(const IntervalSet& s, double lo, double hi) {
  double m = 0;
  for (const auto& iv : s.intervals()) {
    const double a = std::max(iv.lo, lo), b = std::min(iv.hi, hi);
    if (b > a) m += b - a;
  }
  return m;
}

}  // namespace detail

// Density of h with roots fixed at the given points and every non-root drawn
// uniformly from its decorated part.
inline Estimate tau_rooted(const DecoratedGraph& h, const PartitionedGraphon& pg,
                           const std::vector<double>& roots, const DensityOptions& opt = {}) {
  const int n = h.order(), m = h.roots();
  if (static_cast<int>(roots.size()) != m) throw ValidationError("wrong number of root points");
  for (int i = 0; i < m; ++i)
    if (!pg.partition.find(h.decoration(i)).set.contains(roots[i]))
      throw ValidationError("root " + std::to_string(i + 1) + " lies outside part " + h.decoration(i));
  std::vector<const IntervalSet*> sets(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    sets[v] = &pg.partition.find(h.decoration(v)).set;
    if (v >= m && !(sets[v]->measure() > 0)) return {0.0, 0.0};
  }
  const Graphon& w = *pg.graphon;
  double root_factor = 1.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) root_factor *= detail::spec_factor(h.at(i, j), w(roots[i], roots[j]));
  if (n == m || root_factor == 0.0) return {root_factor, 0.0};

  const auto* step = dynamic_cast<const StepGraphon*>(&w);
  const bool exact_ok = step && opt.method != DensityMethod::MonteCarlo &&
                        detail::checked_power(step->parts(), n - m, opt.exact_budget) <= opt.exact_budget;
  if (opt.method == DensityMethod::Exact && !exact_ok)
    throw ValidationError("exact rooted density requires a step graphon within budget");

  if (exact_ok) {
    const std::size_t k = step->parts();
    std::vector<std::vector<double>> dist(static_cast<std::size_t>(n));
    for (int v = m; v < n; ++v) {
      dist[v].resize(k);
      const double total = sets[v]->measure();
      for (std::size_t p = 0; p < k; ++p)
        dist[v][p] = detail::overlap(*sets[v], step->bounds()[p], step->bounds()[p + 1]) / total;
    }
    std::vector<std::size_t> assign(static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) assign[i] = step->part_of(roots[i]);
    double total = 0;
    auto rec = [&](auto&& self, int v, double weight) -> void {
      if (weight == 0.0) return;
      if (v == n) {
        total += weight;
        return;
      }
      for (std::size_t p = 0; p < k; ++p) {
        if (dist[v][p] == 0.0) continue;
        assign[v] = p;
        double f = weight * dist[v][p];
        for (int u = 0; u < v && f != 0.0; ++u) f *= detail::spec_factor(h.at(u, v), step->value(assign[u], p));
        self(self, v + 1, f);
      }
    };
    rec(rec, m, root_factor);
    return {total, 0.0};
  }

  if (opt.samples == 0) throw BudgetError("Monte Carlo rooted density needs a positive sample budget");
  return monte_carlo(opt.samples, opt.seed, 0x726f6f74, [&](RandomStream& r) {
    std::array<double, SmallGraph::kMaxVertices> x{};
    for (int i = 0; i < m; ++i) x[i] = roots[i];
    for (int v = m; v < n; ++v) x[v] = sets[v]->point_at(r.uniform());
    double f = root_factor;
    for (int v = m; v < n && f != 0.0; ++v)
      for (int u = 0; u < v; ++u) f *= detail::spec_factor(h.at(u, v), w(x[u], x[v]));
    return f;
  });
}

// ---------------------------------------------------------------------------
// Density expressions

// Polynomial in decorated graphs: sum of coef * product of graphs.
class DensityExpression {
 public:
  struct Term {
    double coef = 0.0;
    std::vector<std::size_t> factors;  // indices into graphs(), sorted
  };

  DensityExpression() = default;

  static DensityExpression constant(double c) {
    DensityExpression e;
    if (c != 0.0) e.terms_.push_back({c, {}});
    return e;
  }
  static DensityExpression graph(const DecoratedGraph& g) {
    DensityExpression e;
    e.graphs_.push_back(g);
    e.terms_.push_back({1.0, {0}});
    return e;
  }

  const std::vector<DecoratedGraph>& graphs() const { return graphs_; }
  const std::vector<Term>& terms() const { return terms_; }

  DensityExpression operator+(const DensityExpression& o) const {
    DensityExpression r = *this;
    const auto map = r.absorb(o);
    for (const auto& t : o.terms_) r.terms_.push_back({t.coef, r.remap(t.factors, map)});
    r.normalize();
    return r;
  }
  DensityExpression operator*(double c) const {
    DensityExpression r = *this;
    for (auto& t : r.terms_) t.coef *= c;
    r.normalize();
    return r;
  }
  DensityExpression operator-(const DensityExpression& o) const { return *this + o * -1.0; }
  DensityExpression operator*(const DensityExpression& o) const {
    DensityExpression r;
    r.graphs_ = graphs_;
    const auto map = r.absorb(o);
    for (const auto& a : terms_)
      for (const auto& b : o.terms_) {
        auto f = a.factors;
        const auto g = r.remap(b.factors, map);
        f.insert(f.end(), g.begin(), g.end());
        std::sort(f.begin(), f.end());
        r.terms_.push_back({a.coef * b.coef, std::move(f)});
      }
    r.normalize();
    return r;
  }

  // All graphs pairwise compatible.
  void check_compatible() const {
    for (std::size_t i = 1; i < graphs_.size(); ++i)
      if (!graphs_[0].compatible_with(graphs_[i]))
        throw ValidationError("incompatible decorated graphs in expression");
  }

  // Roots of the expression (0 for a pure constant).
  int roots() const { return graphs_.empty() ? 0 : graphs_[0].roots(); }

 private:
  std::vector<std::size_t> absorb(const DensityExpression& o) {
    std::vector<std::size_t> map;
    for (const auto& g : o.graphs_) {
      auto it = std::find(graphs_.begin(), graphs_.end(), g);
      if (it == graphs_.end()) {
        graphs_.push_back(g);
        map.push_back(graphs_.size() - 1);
      } else {
        map.push_back(static_cast<std::size_t>(it - graphs_.begin()));
      }
    }
    return map;
  }
  std::vector<std::size_t> remap(const std::vector<std::size_t>& f, const std::vector<std::size_t>& map) const {
    std::vector<std::size_t> out;
    for (auto i : f) out.push_back(map[i]);
    std::sort(out.begin(), out.end());
    return out;
  }
  void normalize() {
    std::map<std::vector<std::size_t>, double> merged;
    for (const auto& t : terms_) merged[t.factors] += t.coef;
    terms_.clear();
    for (auto& [f, c] : merged)
      if (c != 0.0) terms_.push_back({c, f});
  }

  std::vector<DecoratedGraph> graphs_;
  std::vector<Term> terms_;
};

// Substitutes rooted densities. Monte Carlo errors are propagated to first order.
inline Estimate eval_expression(const DensityExpression& e, const PartitionedGraphon& pg,
                                const std::vector<double>& roots, const DensityOptions& opt = {}) {
  e.check_compatible();
  std::vector<Estimate> vals;
  for (std::size_t i = 0; i < e.graphs().size(); ++i) {
    DensityOptions o = opt;
    o.seed = mix64(opt.seed + 0x9e37 * (i + 1));
    vals.push_back(tau_rooted(e.graphs()[i], pg, roots, o));
  }
  Estimate out;
  std::vector<double> grad(vals.size(), 0.0);
  for (const auto& t : e.terms()) {
    double prod = t.coef;
    for (auto f : t.factors) prod *= vals[f].value;
    out.value += prod;
    for (std::size_t k = 0; k < t.factors.size(); ++k) {
      double d = t.coef;
      for (std::size_t l = 0; l < t.factors.size(); ++l)
        if (l != k) d *= vals[t.factors[l]].value;
      grad[t.factors[k]] += d;
    }
  }
  double var = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) var += grad[i] * grad[i] * vals[i].sigma * vals[i].sigma;
  out.sigma = std::sqrt(var);
  return out;
}

struct Constraint {
  DensityExpression lhs;
  DensityExpression rhs;
};

struct ConstraintReport {
  std::uint64_t samples = 0;
  std::uint64_t violations = 0;
  double violation_rate = 0.0;
  double max_deviation = 0.0;
  bool exact = true;
};

struct ConstraintCheckOptions {
  std::uint64_t samples = 10000;
  double tolerance = 1e-6;   // exact path
  double sigma_factor = 4.0; // Monte Carlo path
  std::uint64_t seed = 0;
  DensityOptions density;
};

// Samples root tuples uniformly from the decorated root parts and counts those
// where the two sides differ beyond tolerance.
inline ConstraintReport check_constraint_ae(const Constraint& c, const PartitionedGraphon& pg,
                                            const ConstraintCheckOptions& opt = {}) {
  DensityExpression both = c.lhs - c.rhs;
  both.check_compatible();
  const DensityExpression all = c.lhs + c.rhs;
  all.check_compatible();
  const int m = all.roots();
  std::vector<const IntervalSet*> root_sets;
  if (!all.graphs().empty())
    for (int i = 0; i < m; ++i) {
      root_sets.push_back(&pg.partition.find(all.graphs()[0].decoration(i)).set);
      if (!(root_sets.back()->measure() > 0)) throw ValidationError("no admissible root tuples: empty root part");
    }
  const bool exact = dynamic_cast<const StepGraphon*>(pg.graphon.get()) != nullptr &&
                     opt.density.method != DensityMethod::MonteCarlo;
  const std::uint64_t samples = m == 0 ? 1 : opt.samples;
  std::vector<double> dev(samples, 0.0);
  std::vector<char> bad(samples, 0);
  parallel_for(samples, [&](std::size_t s) {
    RandomStream r(opt.seed, 0x61652d72, s);
    std::vector<double> roots(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) roots[i] = root_sets[i]->point_at(r.uniform());
    DensityOptions d = opt.density;
    d.seed = mix64(opt.seed ^ (s + 1));
    const auto l = eval_expression(c.lhs, pg, roots, d);
    const auto rr = eval_expression(c.rhs, pg, roots, d);
    const double diff = std::abs(l.value - rr.value);
    const double tol = exact ? opt.tolerance
                             : std::max(opt.tolerance, opt.sigma_factor * std::hypot(l.sigma, rr.sigma));
    dev[s] = diff;
    bad[s] = diff > tol;
  });
  ConstraintReport rep;
  rep.samples = samples;
  rep.exact = exact;
  for (std::uint64_t s = 0; s < samples; ++s) {
    rep.violations += bad[s] ? 1 : 0;
    rep.max_deviation = std::max(rep.max_deviation, dev[s]);
  }
  rep.violation_rate = static_cast<double>(rep.violations) / static_cast<double>(samples);
  return rep;
}

// ---------------------------------------------------------------------------
// Constant-degree parts

struct DetectedPart {
  double size = 0.0;
  double degree = 0.0;
  double start = 0.0;  // smallest grid point in the part
};

// Degrees at the midpoints of a uniform grid, clustered by value. Clusters
// whose degree gaps are below three times the tolerance are rejected.
inline std::vector<DetectedPart> partition_detect(const Graphon& w, double tolerance, int grid = 2500,
                                                  const QuadratureSpec& q = {}) {
  if (grid < 1) throw ValidationError("partition detection needs a positive grid");
  std::vector<double> deg(static_cast<std::size_t>(grid));
  parallel_for(deg.size(), [&](std::size_t i) {
    deg[i] = degree(w, (static_cast<double>(i) + 0.5) / grid, q).value;
  });
  std::vector<std::size_t> order(deg.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return deg[a] < deg[b]; });
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || deg[order[k]] - deg[order[k - 1]] > tolerance) {
      if (k > 0 && deg[order[k]] - deg[order[k - 1]] < 3.0 * tolerance)
        throw ToleranceError("degree clusters are not separated by three times the tolerance");
      clusters.emplace_back();
    }
    clusters.back().push_back(order[k]);
  }
  std::vector<DetectedPart> out;
  for (const auto& c : clusters) {
    DetectedPart p;
    double s = 0;
    std::size_t first = c.front();
    for (auto i : c) {
      s += deg[i];
      first = std::min(first, i);
    }
    p.size = static_cast<double>(c.size()) / grid;
    p.degree = s / static_cast<double>(c.size());
    p.start = (static_cast<double>(first) + 0.5) / grid;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return out;
}

}  // namespace graphonforge
