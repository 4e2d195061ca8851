#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graphonforge/errors.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/rng.hpp"

namespace graphonforge {

// ---------------------------------------------------------------------------
// Coordinate helpers

// Index k >= 1 with frac(x) in [1 - 2^(1-k), 1 - 2^(-k)).
inline int coord(double x) {
  const double f = x - std::floor(x);
  const double g = 1.0 - f;  // exact for f >= 1/2
  int e = 0;
  const double m = std::frexp(g, &e);  // g = m * 2^e, m in [1/2, 1)
  return m == 0.5 ? 2 - e : 1 - e;
}

// Left end of the k-th coordinate interval.
inline double coord_low(int k) { return 1.0 - std::ldexp(1.0, 1 - k); }

// Width of the k-th coordinate interval.
inline double coord_width(int k) { return std::ldexp(1.0, -k); }

// Third of [0,1) containing x: 0, 1 or 2.
inline int third_of(double x) {
  const int t = static_cast<int>(std::floor(3.0 * x));
  return std::clamp(t, 0, 2);
}

// Largest double strictly below 1, used to keep relative coordinates in [0,1).
inline constexpr double kBelowOne = 1.0 - 0x1.0p-53;

// ---------------------------------------------------------------------------
// Interval sets

struct Interval {
  double lo = 0.0;
  double hi = 0.0;  // half-open [lo, hi)
  double length() const { return hi > lo ? hi - lo : 0.0; }
  bool contains(double x) const { return x >= lo && x < hi; }
};

// Finite union of disjoint half-open intervals.
class IntervalSet {
 public:
  IntervalSet() = default;
  IntervalSet(std::initializer_list<Interval> parts) : parts_(parts) {}
  explicit IntervalSet(std::vector<Interval> parts) : parts_(std::move(parts)) {}

  const std::vector<Interval>& intervals() const { return parts_; }
  double measure() const {
    double m = 0;
    for (const auto& p : parts_) m += p.length();
    return m;
  }
  bool contains(double x) const {
    for (const auto& p : parts_)
      if (p.contains(x)) return true;
    return false;
  }
  // Maps u in [0,1) to a point of the set, uniformly.
  double point_at(double u) const {
    const double total = measure();
    double target = u * total;
    for (const auto& p : parts_) {
      const double len = p.length();
      if (target < len) return std::min(p.lo + target, std::nextafter(p.hi, p.lo));
      target -= len;
    }
    for (auto it = parts_.rbegin(); it != parts_.rend(); ++it)
      if (it->length() > 0) return std::nextafter(it->hi, it->lo);
    throw ValidationError("cannot sample from an empty interval set");
  }

 private:
  std::vector<Interval> parts_;
};

struct NamedPart {
  std::string name;
  IntervalSet set;
};

// Named parts of [0,1) used by decorated densities.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<NamedPart> parts) : parts_(std::move(parts)) {}

  const std::vector<NamedPart>& parts() const { return parts_; }
  std::size_t size() const { return parts_.size(); }

  const NamedPart& find(const std::string& name) const {
    for (const auto& p : parts_)
      if (p.name == name) return p;
    throw ValidationError("unknown part: " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& p : parts_)
      if (p.name == name) return true;
    return false;
  }

  static Partition whole() { return Partition({{"V", IntervalSet{{0.0, 1.0}}}}); }

 private:
  std::vector<NamedPart> parts_;
};

// ---------------------------------------------------------------------------
// Graphon interface

class Graphon {
 public:
  virtual ~Graphon() = default;

  virtual double operator()(double x, double y) const = 0;
  virtual std::string kind() const = 0;

  // Closed-form row integral of W(x, .) over [a, b), if available.
  virtual bool has_exact_rows() const { return false; }
  virtual double row_integral_exact(double /*x*/, double /*a*/, double /*b*/) const {
    throw ValidationError("no closed-form row integral for kind " + kind());
  }

  // Points in (a, b) where W(x, .) may be discontinuous. Structured kernels
  // that report these are integrated piece by piece with the midpoint rule.
  virtual bool structured() const { return false; }
  virtual void row_breakpoints(double /*x*/, double /*a*/, double /*b*/,
                               std::vector<double>& /*out*/) const {}

  // Parts declared by the kernel itself (step parts, construction parts).
  virtual Partition partition() const { return Partition::whole(); }

  // Serializable description, if the kernel has one.
  virtual Json to_json() const { throw ValidationError("kind " + kind() + " has no JSON form"); }
};

using GraphonPtr = std::shared_ptr<const Graphon>;

// Piecewise-constant kernel with parts of the given sizes laid out left to right.
class StepGraphon final : public Graphon {
 public:
  StepGraphon(std::vector<double> sizes, std::vector<std::vector<double>> values,
              std::vector<std::string> names = {})
      : sizes_(std::move(sizes)), values_(std::move(values)), names_(std::move(names)) {
    const std::size_t k = sizes_.size();
    if (k == 0) throw ValidationError("step graphon needs at least one part");
    if (values_.size() != k) throw ValidationError("step graphon value matrix has wrong shape");
    double total = 0;
    for (double a : sizes_) {
      if (!(a > 0)) throw ValidationError("step graphon part sizes must be positive");
      total += a;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ValidationError("step graphon part sizes must sum to 1");
    for (std::size_t i = 0; i < k; ++i) {
      if (values_[i].size() != k) throw ValidationError("step graphon value matrix has wrong shape");
      for (std::size_t j = 0; j < k; ++j) {
        const double v = values_[i][j];
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("step graphon values must lie in [0,1]");
        if (values_[j][i] != v) throw ValidationError("step graphon value matrix must be symmetric");
      }
    }
    if (names_.empty())
      for (std::size_t i = 0; i < k; ++i) names_.push_back(std::to_string(i));
    if (names_.size() != k) throw ValidationError("step graphon names have wrong length");
    bounds_.assign(k + 1, 0.0);
    for (std::size_t i = 0; i < k; ++i) bounds_[i + 1] = bounds_[i] + sizes_[i];
    bounds_[k] = 1.0;
  }

  static std::shared_ptr<StepGraphon> constant(double p) {
    return std::make_shared<StepGraphon>(std::vector<double>{1.0},
                                         std::vector<std::vector<double>>{{p}});
  }

  static std::shared_ptr<StepGraphon> from_json(const Json& j) {
    try {
      auto sizes = j.at("sizes").get<std::vector<double>>();
      auto values = j.at("values").get<std::vector<std::vector<double>>>();
      std::vector<std::string> names;
      if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
      return std::make_shared<StepGraphon>(std::move(sizes), std::move(values), std::move(names));
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("malformed step graphon: ") + e.what());
    }
  }

  Json to_json() const override {
    Json j;
    j["kind"] = "step";
    j["sizes"] = sizes_;
    j["values"] = values_;
    j["names"] = names_;
    return j;
  }

  std::size_t parts() const { return sizes_.size(); }
  const std::vector<double>& sizes() const { return sizes_; }
  const std::vector<double>& bounds() const { return bounds_; }
  double value(std::size_t i, std::size_t j) const { return values_[i][j]; }
  const std::vector<std::string>& names() const { return names_; }

  std::size_t part_of(double x) const {
    auto it = std::upper_bound(bounds_.begin() + 1, bounds_.end() - 1, x);
    return static_cast<std::size_t>(it - (bounds_.begin() + 1));
  }

  double operator()(double x, double y) const override { return values_[part_of(x)][part_of(y)]; }
  std::string kind() const override { return "step"; }

  bool has_exact_rows() const override { return true; }
  double row_integral_exact(double x, double a, double b) const override {
    const std::size_t i = part_of(x);
    double s = 0;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
      const double lo = std::max(a, bounds_[j]);
      const double hi = std::min(b, bounds_[j + 1]);
      if (hi > lo) s += values_[i][j] * (hi - lo);
    }
    return s;
  }

  bool structured() const override { return true; }
  void row_breakpoints(double, double a, double b, std::vector<double>& out) const override {
    for (double c : bounds_)
      if (c > a && c < b) out.push_back(c);
  }

  Partition partition() const override {
    std::vector<NamedPart> p;
    for (std::size_t i = 0; i < sizes_.size(); ++i)
      p.push_back({names_[i], IntervalSet{{bounds_[i], bounds_[i + 1]}}});
    return Partition(std::move(p));
  }

 private:
  std::vector<double> sizes_;
  std::vector<std::vector<double>> values_;
  std::vector<std::string> names_;
  std::vector<double> bounds_;
};

// Threshold kernel: 1 iff x + y >= 1.
class HalfGraphon final : public Graphon {
 public:
  double operator()(double x, double y) const override { return x + y >= 1.0 ? 1.0 : 0.0; }
  std::string kind() const override { return "half"; }
  bool has_exact_rows() const override { return true; }
  double row_integral_exact(double x, double a, double b) const override {
    const double lo = std::max(a, 1.0 - x);
    return b > lo ? b - lo : 0.0;
  }
  bool structured() const override { return true; }
  void row_breakpoints(double x, double a, double b, std::vector<double>& out) const override {
    const double c = 1.0 - x;
    if (c > a && c < b) out.push_back(c);
  }
  Json to_json() const override { return Json{{"kind", "half"}}; }
};

// Kernel given by an arbitrary symmetric function.
class FunctionGraphon final : public Graphon {
 public:
  explicit FunctionGraphon(std::function<double(double, double)> f, std::string label = "composite")
      : f_(std::move(f)), label_(std::move(label)) {}
  double operator()(double x, double y) const override { return f_(x, y); }
  std::string kind() const override { return "composite"; }
  const std::string& label() const { return label_; }

 private:
  std::function<double(double, double)> f_;
  std::string label_;
};

// Pointwise combinations, e.g. convex mixtures or clamped sums.
inline GraphonPtr combine(GraphonPtr a, GraphonPtr b, std::function<double(double, double)> op) {
  return std::make_shared<FunctionGraphon>(
      [a, b, op](double x, double y) { return std::clamp(op((*a)(x, y), (*b)(x, y)), 0.0, 1.0); });
}

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureSpec {
  enum class Method { Auto, Exact, Midpoint, MonteCarlo };
  Method method = Method::Auto;
  int panels = 4096;               // uniform panels for unstructured midpoint
  std::uint64_t samples = 100000;  // Monte Carlo draws
  std::uint64_t seed = 0;
};

namespace detail {

// Midpoint rule on each piece between breakpoints, comparing one and two
// panels per piece for the error estimate.
inline Estimate structured_row(const Graphon& w, double x, double a, double b) {
  std::vector<double> cuts{a, b};
  w.row_breakpoints(x, a, b, cuts);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double one = 0, two = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1];
    if (!(hi > lo)) continue;
    const double h = hi - lo;
    one += h * w(x, lo + 0.5 * h);
    two += 0.5 * h * (w(x, lo + 0.25 * h) + w(x, lo + 0.75 * h));
  }
  return {two, std::abs(two - one)};
}

inline Estimate uniform_row(const Graphon& w, double x, double a, double b, int panels) {
  panels = std::max(2, panels - panels % 2);
  const double h = (b - a) / panels;
  double fine = 0, coarse = 0;
  for (int i = 0; i < panels; ++i) fine += w(x, a + (i + 0.5) * h);
  for (int i = 0; i < panels / 2; ++i) coarse += w(x, a + (i + 0.5) * 2 * h);
  fine *= h;
  coarse *= 2 * h;
  return {fine, std::abs(fine - coarse)};
}

}  // namespace detail

// Integral of W(x, .) over [a, b) with an error bound (0 for closed forms).
inline Estimate row_integral(const Graphon& w, double x, double a, double b,
                             const QuadratureSpec& q = {}) {
  using M = QuadratureSpec::Method;
  if (!(b > a)) return {0.0, 0.0};
  switch (q.method) {
    case M::Exact:
      return {w.row_integral_exact(x, a, b), 0.0};
    case M::Midpoint:
      return w.structured() ? detail::structured_row(w, x, a, b)
                            : detail::uniform_row(w, x, a, b, q.panels);
    case M::MonteCarlo: {
      const auto e = monte_carlo(q.samples, q.seed, 0x726f77, [&](RandomStream& r) {
        return w(x, r.uniform(a, b));
      });
      return {e.value * (b - a), e.sigma * (b - a)};
    }
    case M::Auto:
    default:
      if (w.has_exact_rows()) return {w.row_integral_exact(x, a, b), 0.0};
      if (w.structured()) return detail::structured_row(w, x, a, b);
      QuadratureSpec mc = q;
      mc.method = M::MonteCarlo;
      return row_integral(w, x, a, b, mc);
  }
}

inline Estimate row_integral(const Graphon& w, double x, const IntervalSet& set,
                             const QuadratureSpec& q = {}) {
  Estimate total;
  double var = 0;
  for (const auto& iv : set.intervals()) {
    const auto e = row_integral(w, x, iv.lo, iv.hi, q);
    total.value += e.value;
    if (q.method == QuadratureSpec::Method::MonteCarlo) var += e.sigma * e.sigma;
    else total.sigma += e.sigma;
  }
  if (var > 0) total.sigma = std::sqrt(var);
  return total;
}

inline Estimate degree(const Graphon& w, double x, const QuadratureSpec& q = {}) {
  return row_integral(w, x, 0.0, 1.0, q);
}

inline Estimate relative_degree(const Graphon& w, double x, const IntervalSet& part,
                                const QuadratureSpec& q = {}) {
  const double m = part.measure();
  if (!(m > 0)) throw ValidationError("relative degree needs a part of positive measure");
  const auto e = row_integral(w, x, part, q);
  return {e.value / m, e.sigma / m};
}

// ---------------------------------------------------------------------------
// W-random graphs

struct EdgeListGraph {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // u < v, lexicographic

  std::string to_text() const {
    std::string s = std::to_string(n) + " " + std::to_string(edges.size()) + "\n";
    for (const auto& [u, v] : edges) s += std::to_string(u) + " " + std::to_string(v) + "\n";
    return s;
  }

  static EdgeListGraph from_text(const std::string& text) {
    std::istringstream in(text);
    EdgeListGraph g;
    std::size_t m = 0;
    if (!(in >> g.n >> m)) throw ValidationError("edge list: missing header line 'n m'");
    for (std::size_t i = 0; i < m; ++i) {
      long long u = -1, v = -1;
      if (!(in >> u >> v)) throw ValidationError("edge list: expected " + std::to_string(m) + " edges");
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= g.n || static_cast<std::size_t>(v) >= g.n || u == v)
        throw ValidationError("edge list: invalid edge");
      g.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(g.edges.begin(), g.edges.end());
    if (std::adjacent_find(g.edges.begin(), g.edges.end()) != g.edges.end())
      throw ValidationError("edge list: duplicate edge");
    return g;
  }
};

struct SampledGraph {
  EdgeListGraph graph;
  std::vector<double> points;
};

// Points come from stream 0; the coin flips of row i come from stream 1,
// substream i, so rows can be generated independently.
inline SampledGraph sample_w_random_graph(const Graphon& w, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample size must be at least 1");
  SampledGraph out;
  out.graph.n = n;
  out.points.resize(n);
  RandomStream pts(seed, 0);
  for (auto& x : out.points) x = pts.uniform();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> rows(n);
  parallel_for(n, [&](std::size_t i) {
    RandomStream coin(seed, 1, i);
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin.uniform() < w(out.points[i], out.points[j])) rows[i].emplace_back(i, j);
  });
  for (auto& r : rows) out.graph.edges.insert(out.graph.edges.end(), r.begin(), r.end());
  return out;
}

// ---------------------------------------------------------------------------
// Distances and entropy

struct EstimatorSpec {
  std::uint64_t samples = 1000000;
  std::uint64_t seed = 0;
  int resolution = 512;  // grid side for deterministic quadrature
};

inline Estimate l1_distance(const Graphon& a, const Graphon& b, const EstimatorSpec& spec = {}) {
  const auto* sa = dynamic_cast<const StepGraphon*>(&a);
  const auto* sb = dynamic_cast<const StepGraphon*>(&b);
  if (sa && sb) {
    std::vector<double> cuts = sa->bounds();
    cuts.insert(cuts.end(), sb->bounds().begin(), sb->bounds().end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double total = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double hx = cuts[i + 1] - cuts[i];
      if (!(hx > 0)) continue;
      const double mx = 0.5 * (cuts[i] + cuts[i + 1]);
      for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        const double hy = cuts[j + 1] - cuts[j];
        if (!(hy > 0)) continue;
        const double my = 0.5 * (cuts[j] + cuts[j + 1]);
        total += hx * hy * std::abs((*sa)(mx, my) - (*sb)(mx, my));
      }
    }
    return {total, 0.0};
  }
  return monte_carlo(spec.samples, spec.seed, 0x6c31, [&](RandomStream& r) {
    const double x = r.uniform(), y = r.uniform();
    return std::abs(a(x, y) - b(x, y));
  });
}

inline double entropy_integrand(double w) {
  if (w <= 0.0 || w >= 1.0) return 0.0;
  return w * std::log(w) + (1.0 - w) * std::log(1.0 - w);
}

// Exact for step kernels; otherwise the midpoint rule on a resolution^2 grid,
// with the difference to the half-resolution grid as error estimate.
inline Estimate entropy(const Graphon& w, const EstimatorSpec& spec = {}) {
  if (const auto* s = dynamic_cast<const StepGraphon*>(&w)) {
    double total = 0;
    for (std::size_t i = 0; i < s->parts(); ++i)
      for (std::size_t j = 0; j < s->parts(); ++j)
        total += s->sizes()[i] * s->sizes()[j] * entropy_integrand(s->value(i, j));
    return {total, 0.0};
  }
  auto grid = [&](int r) {
    std::vector<double> rows(static_cast<std::size_t>(r));
    parallel_for(static_cast<std::size_t>(r), [&](std::size_t i) {
      double acc = 0;
      const double x = (static_cast<double>(i) + 0.5) / r;
      for (int j = 0; j < r; ++j) acc += entropy_integrand(w(x, (j + 0.5) / r));
      rows[i] = acc;
    });
    double total = 0;
    for (double v : rows) total += v;
    return total / (static_cast<double>(r) * r);
  };
  const int r = std::max(2, spec.resolution);
  const double fine = grid(r);
  const double coarse = grid(r / 2);
  return {fine, std::abs(fine - coarse)};
}

// ---------------------------------------------------------------------------
// Rendering

// Row i, column j holds round(255 * (1 - mean of 3x3 samples over the cell)),
// with x growing to the right and y growing downwards.
inline std::vector<unsigned char> render(const Graphon& w, int resolution) {
  if (resolution < 1) throw ValidationError("render resolution must be >= 1");
  const std::size_t r = static_cast<std::size_t>(resolution);
  std::vector<unsigned char> pixels(r * r);
  parallel_for(r, [&](std::size_t i) {
    for (std::size_t j = 0; j < r; ++j) {
      double acc = 0;
      for (int s = 0; s < 3; ++s) {
        const double y = (3.0 * static_cast<double>(i) + s + 0.5) / (3.0 * static_cast<double>(r));
        for (int t = 0; t < 3; ++t) {
          const double x = (3.0 * static_cast<double>(j) + t + 0.5) / (3.0 * static_cast<double>(r));
          acc += w(x, y);
        }
      }
      const double v = std::round(255.0 * (1.0 - acc / 9.0));
      pixels[i * r + j] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
  });
  return pixels;
}

inline std::string encode_pgm(const std::vector<unsigned char>& pixels, int resolution) {
  std::string out = "P5\n" + std::to_string(resolution) + " " + std::to_string(resolution) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

}  // namespace graphonforge
