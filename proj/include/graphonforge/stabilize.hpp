#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphonforge/bounding.hpp"
#include "graphonforge/errors.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/rng.hpp"
#include "graphonforge/series.hpp"

namespace graphonforge::stab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Block k holds k + 1 coordinates a_{k,1..k+1}; blocks are stored back to back.
inline int block_offset(int k) { return (k - 1) * (k + 2) / 2; }
inline int flat_index(int k, int j) { return block_offset(k) + j; }  // 1-based
inline int flat_dim(int depth) { return block_offset(depth + 1); }

// ---------------------------------------------------------------------------
// Intervals and finite unions of boxes

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  Json to_json() const { return Json::array({lo, hi}); }
  static Interval from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
      throw ValidationError("interval must be [lo, hi]");
    Interval i{j[0].get<double>(), j[1].get<double>()};
    if (!(i.lo < i.hi)) throw ValidationError("interval must be non-degenerate");
    return i;
  }
};

// Merged union of closed intervals.
inline std::vector<Interval> merge_intervals(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> out;
  for (const auto& i : v) {
    if (!out.empty() && i.lo <= out.back().hi) out.back().hi = std::max(out.back().hi, i.hi);
    else out.push_back(i);
  }
  return out;
}

inline double total_length(const std::vector<Interval>& v) {
  double s = 0;
  for (const auto& i : merge_intervals(v)) s += i.length();
  return s;
}

using Box = std::vector<Interval>;

class BoxUnion {
 public:
  BoxUnion() = default;
  explicit BoxUnion(int dim) : dim_(dim) {}
  BoxUnion(int dim, std::vector<Box> boxes) : dim_(dim), boxes_(std::move(boxes)) {
    for (const auto& b : boxes_)
      if (static_cast<int>(b.size()) != dim_) throw ValidationError("box dimension mismatch");
  }

  int dim() const { return dim_; }
  const std::vector<Box>& boxes() const { return boxes_; }
  bool empty() const { return boxes_.empty(); }
  void add(Box b) {
    if (static_cast<int>(b.size()) != dim_) throw ValidationError("box dimension mismatch");
    boxes_.push_back(std::move(b));
  }

  bool contains(std::span<const double> x) const {
    for (const auto& b : boxes_) {
      bool in = true;
      for (int i = 0; i < dim_ && in; ++i) in = b[static_cast<std::size_t>(i)].contains(x[static_cast<std::size_t>(i)]);
      if (in) return true;
    }
    return false;
  }

  // Last-coordinate section over a prefix of length dim - 1.
  std::vector<Interval> slice(std::span<const double> prefix) const {
    std::vector<Interval> out;
    for (const auto& b : boxes_) {
      bool in = true;
      for (int i = 0; i + 1 < dim_ && in; ++i)
        in = b[static_cast<std::size_t>(i)].contains(prefix[static_cast<std::size_t>(i)]);
      if (in) out.push_back(b.back());
    }
    return merge_intervals(out);
  }

  // Projection onto the first dim - 1 coordinates.
  BoxUnion project() const {
    BoxUnion p(dim_ - 1);
    for (const auto& b : boxes_) p.add(Box(b.begin(), b.end() - 1));
    return p;
  }

  BoxUnion times(const Interval& u) const {
    BoxUnion p(dim_ + 1);
    if (dim_ == 0) {
      p.add(Box{u});
      return p;
    }
    for (const auto& b : boxes_) {
      Box nb = b;
      nb.push_back(u);
      p.add(std::move(nb));
    }
    return p;
  }

  // Intersection with a single box; pieces of positive volume only.
  BoxUnion intersect(const Box& c) const {
    BoxUnion out(dim_);
    for (const auto& b : boxes_) {
      Box nb(static_cast<std::size_t>(dim_));
      bool ok = true;
      for (int i = 0; i < dim_ && ok; ++i) {
        const auto k = static_cast<std::size_t>(i);
        nb[k] = {std::max(b[k].lo, c[k].lo), std::min(b[k].hi, c[k].hi)};
        ok = nb[k].lo < nb[k].hi;
      }
      if (ok) out.add(std::move(nb));
    }
    return out;
  }

  // Point drawn from a box chosen with probability proportional to volume.
  std::vector<double> sample(RandomStream& r) const {
    if (dim_ == 0) return {};
    if (boxes_.empty()) throw ValidationError("cannot sample an empty set");
    double total = 0;
    for (const auto& b : boxes_) total += volume(b);
    double u = r.uniform() * total;
    const Box* pick = &boxes_.back();
    for (const auto& b : boxes_) {
      u -= volume(b);
      if (u < 0) {
        pick = &b;
        break;
      }
    }
    std::vector<double> x(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
      const auto& s = (*pick)[static_cast<std::size_t>(i)];
      x[static_cast<std::size_t>(i)] = r.uniform(s.lo, s.hi);
    }
    return x;
  }

  static double volume(const Box& b) {
    double v = 1;
    for (const auto& i : b) v *= i.length();
    return v;
  }

  Json to_json() const {
    Json out = Json::array();
    for (const auto& b : boxes_) {
      Json jb = Json::array();
      for (const auto& i : b) jb.push_back(i.to_json());
      out.push_back(jb);
    }
    return out;
  }

  static BoxUnion from_json(const Json& j, int dim) {
    if (!j.is_array()) throw ValidationError("box union must be a list of boxes");
    BoxUnion u(dim);
    for (const auto& jb : j) {
      if (!jb.is_array() || static_cast<int>(jb.size()) != dim)
        throw ValidationError("box at level " + std::to_string(dim) + " needs " + std::to_string(dim) + " sides");
      Box b;
      for (const auto& s : jb) b.push_back(Interval::from_json(s));
      u.add(std::move(b));
    }
    return u;
  }

 private:
  int dim_ = 0;
  std::vector<Box> boxes_;
};

// ---------------------------------------------------------------------------
// Target functions on the flattened coordinate space

class Target {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  static Target closed_form(Fn f, std::string label = "closed form") {
    Target t;
    t.kind_ = Kind::ClosedForm;
    t.fn_ = std::move(f);
    t.label_ = std::move(label);
    return t;
  }
  static Target polynomial(MonomialPolynomial p) {
    Target t;
    t.kind_ = Kind::Polynomial;
    t.poly_ = std::make_shared<MonomialPolynomial>(std::move(p));
    t.label_ = "polynomial";
    return t;
  }
  static Target series(std::shared_ptr<const TruncatedSeries> s, std::string source = "") {
    Target t;
    t.kind_ = Kind::Series;
    t.poly_ = std::make_shared<MonomialPolynomial>(s->coefficients);
    t.label_ = "series";
    t.source_ = std::move(source);
    return t;
  }

  bool symbolic() const { return kind_ != Kind::ClosedForm; }
  const MonomialPolynomial* poly() const { return poly_.get(); }

  double value(std::span<const double> a) const { return symbolic() ? poly_->eval(padded(a)) : fn_(a); }

  // Partial derivative in flattened coordinate `index` (1-based).
  double partial(std::span<const double> a, int index) const {
    if (symbolic()) {
      if (index > poly_->max_variable()) return 0.0;
      return poly_->partial(padded(a), index);
    }
    constexpr double h = 1e-5;
    std::vector<double> p(a.begin(), a.end()), m(a.begin(), a.end());
    p[static_cast<std::size_t>(index - 1)] += h;
    m[static_cast<std::size_t>(index - 1)] -= h;
    return (fn_(p) - fn_(m)) / (2 * h);
  }

  Json to_json() const {
    switch (kind_) {
      case Kind::Polynomial: return Json{{"polynomial", poly_->to_json()}};
      case Kind::Series: return source_.empty() ? Json{{"polynomial", poly_->to_json()}} : Json{{"series", source_}};
      default: return Json{{"closed_form", label_}};
    }
  }

  // {"terms": [{"c": 1, "x": [1, 2]}]}, {"polynomial": {rank: coef}}, {"constant": v}
  // or {"series": path}; "x" lists flattened coordinates (1-based) with repetition.
  static Target from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("target must be an object");
    if (j.contains("terms")) {
      MonomialPolynomial p;
      for (const auto& term : j.at("terms")) {
        if (!term.contains("c") || !term.at("c").is_number()) throw ValidationError("term needs a numeric c");
        std::vector<int> x;
        if (term.contains("x"))
          for (const auto& v : term.at("x")) {
            if (!v.is_number_integer() || v.get<int>() < 1) throw ValidationError("term variables must be positive");
            x.push_back(v.get<int>());
          }
        p.add(rank(Multiset(std::move(x))), term.at("c").get<double>());
      }
      return polynomial(std::move(p));
    }
    if (j.contains("polynomial")) return polynomial(MonomialPolynomial::from_json(j.at("polynomial")));
    if (j.contains("constant")) {
      MonomialPolynomial p;
      p.set(1, j.at("constant").get<double>());
      return polynomial(std::move(p));
    }
    if (j.contains("series")) {
      const std::string path = j.at("series").get<std::string>();
      auto s = std::make_shared<TruncatedSeries>(TruncatedSeries::from_json(read_json_file(path)));
      return series(s, path);
    }
    throw ValidationError("target needs terms, polynomial, constant or series");
  }

 private:
  enum class Kind { ClosedForm, Polynomial, Series };

  std::span<const double> padded(std::span<const double> a) const {
    const int need = poly_->max_variable();
    if (static_cast<int>(a.size()) >= need) return a;
    thread_local std::vector<double> buf;
    buf.assign(a.begin(), a.end());
    buf.resize(static_cast<std::size_t>(need), 0.0);
    return buf;
  }

  Kind kind_ = Kind::ClosedForm;
  Fn fn_;
  std::shared_ptr<const MonomialPolynomial> poly_;
  std::string label_;
  std::string source_;
};

using Targets = std::vector<Target>;

// k x (k+1) matrix of partials of t_1..t_k in the block-k coordinates.
// Missing targets contribute zero rows.
inline Mat jacobian_Mk(const Targets& t, int k, std::span<const double> a) {
  if (k < 1) throw ValidationError("block index must be >= 1");
  if (static_cast<int>(a.size()) < flat_dim(k)) throw ValidationError("point does not cover block " + std::to_string(k));
  Mat m = Mat::Zero(k, k + 1);
  for (int i = 1; i <= k && i <= static_cast<int>(t.size()); ++i)
    for (int j = 1; j <= k + 1; ++j) m(i - 1, j - 1) = t[static_cast<std::size_t>(i - 1)].partial(a, flat_index(k, j));
  return m;
}

inline int numeric_rank(const Mat& m, double tol = 1e-7) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++r;
  return r;
}

inline Mat submatrix(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i] - 1, cols[j] - 1);
  return s;
}

// ---------------------------------------------------------------------------
// Continuation of implicit solutions f(x, y) = 0

struct ImplicitProblem {
  std::function<Vec(double, const Vec&)> f;
  std::function<Mat(double, const Vec&)> jac_y;  // optional; central differences otherwise
  std::function<Vec(double, const Vec&)> jac_x;  // optional

  Mat A(double x, const Vec& y) const {
    if (jac_y) return jac_y(x, y);
    constexpr double h = 1e-5;
    const auto n = y.size();
    Mat a(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vec p = y, m = y;
      p(j) += h;
      m(j) -= h;
      a.col(j) = (f(x, p) - f(x, m)) / (2 * h);
    }
    return a;
  }
  Vec h(double x, const Vec& y) const {
    if (jac_x) return jac_x(x, y);
    constexpr double d = 1e-5;
    return (f(x + d, y) - f(x - d, y)) / (2 * d);
  }
  // Tangent of the solution curve: -A^{-1} h.
  Vec slope(double x, const Vec& y) const { return -A(x, y).fullPivLu().solve(h(x, y)); }
};

struct ContinuationOptions {
  int points = 1001;
  double tube = 0.25;             // allowed distance from the reference (or corrector move)
  double det_floor = 1e-8;        // minimum |det A|
  double newton_tol = 1e-12;
  int max_newton = 40;
  int max_halvings = 20;
  std::function<Vec(double)> reference;  // closed-form solution, when known
};

struct Trace {
  std::vector<double> x;
  std::vector<Vec> y;
  double max_residual = 0.0;
  double min_abs_det = std::numeric_limits<double>::infinity();
  double max_reference_deviation = 0.0;
  bool has_reference = false;

  Json to_json(bool with_points = false) const {
    Json j{{"points", x.size()},
           {"max_residual", max_residual},
           {"min_abs_det", min_abs_det}};
    if (has_reference) j["max_reference_deviation"] = max_reference_deviation;
    if (with_points) {
      Json pts = Json::array();
      for (std::size_t i = 0; i < x.size(); ++i) {
        Json yv = Json::array();
        for (Eigen::Index k = 0; k < y[i].size(); ++k) yv.push_back(y[i](k));
        pts.push_back(Json{{"x", x[i]}, {"y", yv}});
      }
      j["trace"] = pts;
    }
    return j;
  }
};

namespace detail {

inline double check_det(const Mat& a, double floor, double x) {
  const double det = a.size() == 0 ? 1.0 : a.determinant();
  if (!(std::abs(det) >= floor))
    throw ToleranceError("Jacobian floor: |det| = " + format_number(std::abs(det)) + " below " +
                         format_number(floor) + " at x = " + format_number(x));
  return std::abs(det);
}

// Newton iteration at fixed x; converged when both the residual and the
// last update are negligible.
inline std::optional<Vec> newton(const ImplicitProblem& p, double x, Vec y, const ContinuationOptions& o,
                                 double& min_det) {
  for (int it = 0; it < o.max_newton; ++it) {
    const Vec fx = p.f(x, y);
    const Mat a = p.A(x, y);
    min_det = std::min(min_det, check_det(a, o.det_floor, x));
    const Vec step = a.fullPivLu().solve(fx);
    y -= step;
    if (!y.allFinite()) return std::nullopt;
    const double res = p.f(x, y).lpNorm<Eigen::Infinity>();
    if (res <= o.newton_tol && step.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + y.lpNorm<Eigen::Infinity>())) {
      min_det = std::min(min_det, check_det(p.A(x, y), o.det_floor, x));
      return y;
    }
  }
  return std::nullopt;
}

// One grid step with adaptive subdivision.
inline Vec advance(const ImplicitProblem& p, double x0, const Vec& y0, double x1, const ContinuationOptions& o,
                   double& min_det, int depth = 0) {
  min_det = std::min(min_det, check_det(p.A(x0, y0), o.det_floor, x0));
  const Vec pred = y0 + (x1 - x0) * p.slope(x0, y0);
  auto y = newton(p, x1, pred, o, min_det);
  const bool moved_ok = y && (*y - pred).lpNorm<Eigen::Infinity>() <= o.tube;
  if (y && moved_ok) return *y;
  if (depth >= o.max_halvings)
    throw ToleranceError("continuation left the tube near x = " + format_number(x1));
  const double mid = 0.5 * (x0 + x1);
  const Vec ym = advance(p, x0, y0, mid, o, min_det, depth + 1);
  return advance(p, mid, ym, x1, o, min_det, depth + 1);
}

}  // namespace detail

// Traces y(x) with f(x, y(x)) = 0 over [a, b] starting from the zero (x0, y0).
inline Trace continue_implicit(const ImplicitProblem& p, double x0, const Vec& y0, double a, double b,
                               const ContinuationOptions& o = {}) {
  if (!(a < b) || x0 < a || x0 > b) throw ValidationError("seed must lie in a non-degenerate interval [a, b]");
  if (o.points < 2) throw ValidationError("continuation needs at least 2 grid points");
  if (p.f(x0, y0).lpNorm<Eigen::Infinity>() > 1e-10) throw ValidationError("seed is not a zero of f");
  std::vector<double> grid(static_cast<std::size_t>(o.points));
  for (int i = 0; i < o.points; ++i) grid[static_cast<std::size_t>(i)] = a + (b - a) * i / (o.points - 1);
  grid.push_back(x0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const auto start = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), x0) - grid.begin());
  Trace t;
  t.x = grid;
  t.y.assign(grid.size(), y0);
  t.min_abs_det = detail::check_det(p.A(x0, y0), o.det_floor, x0);
  for (std::size_t i = start + 1; i < grid.size(); ++i)
    t.y[i] = detail::advance(p, grid[i - 1], t.y[i - 1], grid[i], o, t.min_abs_det);
  for (std::size_t i = start; i-- > 0;) t.y[i] = detail::advance(p, grid[i + 1], t.y[i + 1], grid[i], o, t.min_abs_det);
  t.has_reference = static_cast<bool>(o.reference);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    t.max_residual = std::max(t.max_residual, p.f(grid[i], t.y[i]).lpNorm<Eigen::Infinity>());
    if (t.has_reference) {
      const double dev = (t.y[i] - o.reference(grid[i])).lpNorm<Eigen::Infinity>();
      t.max_reference_deviation = std::max(t.max_reference_deviation, dev);
      if (dev > o.tube) throw ToleranceError("trace left the tube around the reference at x = " + format_number(grid[i]));
    }
  }
  return t;
}

// Solution at a single point, reached by continuation from (x0, y0).
inline Vec solve_along(const ImplicitProblem& p, double x0, const Vec& y0, double x1, const ContinuationOptions& o) {
  if (x0 == x1) return y0;
  double det = std::numeric_limits<double>::infinity();
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(x1 - x0) / 0.02)));
  Vec y = y0;
  for (int s = 1; s <= steps; ++s) {
    const double xa = x0 + (x1 - x0) * (s - 1) / steps;
    const double xb = s == steps ? x1 : x0 + (x1 - x0) * s / steps;
    y = detail::advance(p, xa, y, xb, o, det);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Perturbed families and the Gronwall-type bound

struct PerturbedFamily {
  std::string name;
  int n = 1;
  ImplicitProblem f, f_hat;
  std::function<Vec(double)> g;  // exact solution of f = 0
  double a = 0, b = 1, x0 = 0;
  Vec y0;                        // zero of f_hat at x0
  double tube = 0.1;
};

inline std::vector<PerturbedFamily> synthetic_families(double delta = 1e-3) {
  std::vector<PerturbedFamily> out;
  auto vec1 = [](double v) { return Vec::Constant(1, v); };
  {
    PerturbedFamily p;
    p.name = "parabola";
    p.f.f = [=](double x, const Vec& y) { return vec1(y(0) - x * x); };
    p.f_hat.f = [=](double x, const Vec& y) { return vec1(y(0) - x * x - delta); };
    p.g = [=](double x) { return vec1(x * x); };
    p.y0 = vec1(delta);
    out.push_back(p);
  }
  {
    PerturbedFamily p;
    p.name = "cubic";
    p.f.f = [=](double x, const Vec& y) { return vec1(y(0) * y(0) * y(0) + y(0) - x); };
    p.f_hat.f = [=](double x, const Vec& y) { return vec1(y(0) * y(0) * y(0) + y(0) - (1 + delta) * x); };
    p.g = [=](double x) {
      const double s = std::sqrt(x * x / 4 + 1.0 / 27);
      return vec1(std::cbrt(x / 2 + s) + std::cbrt(x / 2 - s));
    };
    p.y0 = vec1(0.0);
    out.push_back(p);
  }
  {
    PerturbedFamily p;
    p.name = "planar";
    p.n = 2;
    p.f.f = [=](double x, const Vec& y) {
      Vec r(2);
      r << y(0) + 0.5 * y(1) * y(1) - x, y(1) - std::sin(x);
      return r;
    };
    p.f_hat.f = [=](double x, const Vec& y) {
      Vec r(2);
      r << y(0) + 0.5 * y(1) * y(1) - x, y(1) - std::sin(x) - delta * x;
      return r;
    };
    p.g = [=](double x) {
      Vec r(2);
      r << x - 0.5 * std::sin(x) * std::sin(x), std::sin(x);
      return r;
    };
    p.y0 = Vec::Zero(2);
    out.push_back(p);
  }
  return out;
}

struct GronwallReport {
  std::string family;
  double measured = 0.0;  // sup ||g_hat - g||_2
  double bound = 0.0;
  double K = 0.0;
  double rho = 0.0;
  double eps0 = 0.0;
  bool holds = false;
  Trace trace;

  Json to_json() const {
    return Json{{"family", family}, {"measured", measured}, {"bound", bound}, {"K", K},
                {"rho", rho},       {"eps0", eps0},         {"holds", holds}, {"continuation", trace.to_json()}};
  }
};

// K and rho are estimated by sampling the tube around the exact solution and
// inflated by 10%; the bound is then compared against the traced deviation.
inline GronwallReport gronwall_check(const PerturbedFamily& fam, std::uint64_t samples = 2000,
                                     std::uint64_t seed = 0, const ContinuationOptions& base = {}) {
  GronwallReport rep;
  rep.family = fam.name;
  ContinuationOptions o = base;
  o.reference = fam.g;
  o.tube = fam.tube;
  rep.trace = continue_implicit(fam.f_hat, fam.x0, fam.y0, fam.a, fam.b, o);
  for (std::size_t i = 0; i < rep.trace.x.size(); ++i)
    rep.measured = std::max(rep.measured, (rep.trace.y[i] - fam.g(rep.trace.x[i])).norm());
  rep.eps0 = (fam.g(fam.x0) - fam.y0).lpNorm<Eigen::Infinity>();
  RandomStream r(seed, 0x67726f);
  double lip = 0, rho = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const double x = r.uniform(fam.a, fam.b);
    const Vec c = fam.g(x);
    Vec y1 = c, y2 = c;
    for (int k = 0; k < fam.n; ++k) {
      y1(k) += r.uniform(-fam.tube, fam.tube);
      y2(k) += r.uniform(-fam.tube, fam.tube);
    }
    const Vec m1 = fam.f.slope(x, y1), m2 = fam.f.slope(x, y2);
    const double dy = (y1 - y2).norm();
    if (dy > 1e-9) lip = std::max(lip, (m1 - m2).norm() / dy);
    rho = std::max(rho, (m1 - fam.f_hat.slope(x, y1)).norm());
  }
  rep.K = 1.1 * 2.0 * lip;
  rep.rho = 1.1 * rho;
  const double kr = rep.K + rep.rho;
  const double ratio = kr > 0 ? rep.rho / kr : 0.0;
  rep.bound = std::sqrt(fam.n * rep.eps0 * rep.eps0 + ratio) * std::exp((fam.b - fam.a) * kr / 2);
  // Rounding slack for the exactly tight parabola case.
  rep.holds = rep.measured <= rep.bound * (1 + 1e-9) + 1e-12;
  return rep;
}

// ---------------------------------------------------------------------------
// Variable and stabilizing systems

struct Stabilizer {
  enum class Kind { Identity, Explicit, Implicit };
  Kind kind = Kind::Identity;
  // Explicit form: full block values (length k + 1) from x_1..x_k; only the
  // entries in J and d are used.
  std::function<std::vector<double>(std::span<const double>)> fn;
  std::vector<std::pair<int, MonomialPolynomial>> components;  // JSON form of explicit stabilizers

  static Stabilizer identity() { return {}; }
  static Stabilizer implicit() {
    Stabilizer s;
    s.kind = Kind::Implicit;
    return s;
  }
  static Stabilizer explicit_fn(std::function<std::vector<double>(std::span<const double>)> f) {
    Stabilizer s;
    s.kind = Kind::Explicit;
    s.fn = std::move(f);
    return s;
  }
  // Components as polynomials in x_1..x_k keyed by block coordinate.
  static Stabilizer polynomials(std::vector<std::pair<int, MonomialPolynomial>> comps, int k) {
    Stabilizer s;
    s.kind = Kind::Explicit;
    s.components = comps;
    s.fn = [comps, k](std::span<const double> x) {
      std::vector<double> out(static_cast<std::size_t>(k + 1), 0.0);
      for (const auto& [j, p] : comps) out[static_cast<std::size_t>(j - 1)] = p.eval(x);
      return out;
    };
    return s;
  }
};

struct Level {
  Interval U;
  BoxUnion V;
  std::vector<int> I, J;  // 1-based, sorted
  int d = 1;
  std::vector<double> b;  // length k + 1
  Stabilizer w;
};

class StabilizingSystem {
 public:
  StabilizingSystem() = default;
  StabilizingSystem(std::vector<Level> levels, double c = 1.0) : levels_(std::move(levels)), c_(c) { validate(); }

  int depth() const { return static_cast<int>(levels_.size()); }
  double c() const { return c_; }
  const Level& level(int k) const { return levels_.at(static_cast<std::size_t>(k - 1)); }
  Level& level(int k) { return levels_.at(static_cast<std::size_t>(k - 1)); }
  const std::vector<Level>& levels() const { return levels_; }

  void validate() const {
    for (int k = 1; k <= depth(); ++k) {
      const auto& l = level(k);
      const std::string at = " at level " + std::to_string(k);
      if (!(l.U.lo >= 0 && l.U.hi <= 1 && l.U.lo < l.U.hi)) throw ValidationError("U must be a non-degenerate subinterval of [0,1]" + at);
      if (l.V.dim() != k) throw ValidationError("V has the wrong dimension" + at);
      if (static_cast<int>(l.b.size()) != k + 1) throw ValidationError("base point needs k + 1 coordinates" + at);
      for (double v : l.b)
        if (!(v > 0 && v < 1)) throw ValidationError("base point must lie in (0,1)" + at);
      if (l.I.size() != l.J.size()) throw ValidationError("|I| must equal |J|" + at);
      for (int i : l.I)
        if (i < 1 || i > k) throw ValidationError("I must be a subset of [k]" + at);
      for (int j : l.J)
        if (j < 1 || j > k + 1) throw ValidationError("J must be a subset of [k+1]" + at);
      if (l.d < 1 || l.d > k + 1 || std::find(l.J.begin(), l.J.end(), l.d) != l.J.end())
        throw ValidationError("d must lie in [k+1] outside J" + at);
      const double bd = l.b[static_cast<std::size_t>(l.d - 1)];
      if (!(bd > l.U.lo && bd < l.U.hi)) throw ValidationError("b_{k,d} must be interior to U" + at);
      for (const auto& box : l.V.boxes()) {
        if (!(box.back().lo >= l.U.lo && box.back().hi <= l.U.hi)) throw ValidationError("V_k must lie in V_{k-1} x U_k" + at);
      }
      if (!l.J.empty() && l.w.kind == Stabilizer::Kind::Identity)
        throw ValidationError("a nonempty J needs an explicit or implicit stabilizer" + at);
    }
  }

  // Flattened point (w~_{<=k}(x), b_{>k}) of length flat_dim(depth).
  std::vector<double> point(const Targets& t, std::span<const double> x) const {
    const int k = static_cast<int>(x.size());
    std::vector<double> a(static_cast<std::size_t>(flat_dim(depth())));
    for (int lv = 1; lv <= depth(); ++lv) {
      const auto& b = level(lv).b;
      std::copy(b.begin(), b.end(), a.begin() + block_offset(lv));
    }
    for (int lv = 1; lv <= k; ++lv) fill_block(t, a, lv, x.subspan(0, static_cast<std::size_t>(lv)));
    return a;
  }

  // Same point but with block k at its base value.
  std::vector<double> base_point(const Targets& t, std::span<const double> x_prefix) const {
    return point(t, x_prefix);
  }

  Json to_json() const {
    Json lv = Json::array();
    for (int k = 1; k <= depth(); ++k) {
      const auto& l = level(k);
      Json w;
      switch (l.w.kind) {
        case Stabilizer::Kind::Identity: w = Json{{"kind", "identity"}}; break;
        case Stabilizer::Kind::Implicit: w = Json{{"kind", "implicit"}}; break;
        case Stabilizer::Kind::Explicit: {
          Json comps = Json::object();
          for (const auto& [j, p] : l.w.components) comps[std::to_string(j)] = Json{{"polynomial", p.to_json()}};
          w = Json{{"kind", "explicit"}, {"components", comps}};
          break;
        }
      }
      lv.push_back(Json{{"U", l.U.to_json()}, {"V", l.V.to_json()}, {"I", l.I}, {"J", l.J},
                        {"d", l.d}, {"b", l.b}, {"stabilizer", w}});
    }
    return Json{{"c", c_}, {"levels", lv}};
  }

  static StabilizingSystem from_json(const Json& j) {
    try {
      std::vector<Level> levels;
      int k = 0;
      for (const auto& jl : j.at("levels")) {
        ++k;
        Level l;
        l.U = Interval::from_json(jl.at("U"));
        l.V = jl.contains("V") ? BoxUnion::from_json(jl.at("V"), k)
                               : (k == 1 ? BoxUnion(0).times(l.U) : levels.back().V.times(l.U));
        l.I = jl.value("I", std::vector<int>{});
        l.J = jl.value("J", std::vector<int>{});
        std::sort(l.I.begin(), l.I.end());
        std::sort(l.J.begin(), l.J.end());
        l.d = jl.value("d", 1);
        l.b = jl.at("b").get<std::vector<double>>();
        const Json w = jl.value("stabilizer", Json{{"kind", "identity"}});
        const std::string kind = w.value("kind", std::string("identity"));
        if (kind == "identity") {
          l.w = Stabilizer::identity();
        } else if (kind == "implicit") {
          l.w = Stabilizer::implicit();
        } else if (kind == "explicit" || kind == "polynomial") {
          std::vector<std::pair<int, MonomialPolynomial>> comps;
          for (const auto& [key, val] : w.at("components").items()) {
            const int idx = std::stoi(key);
            const Target tv = Target::from_json(val);
            if (!tv.poly()) throw ValidationError("stabilizer components must be polynomials");
            if (idx < 1 || idx > k + 1) throw ValidationError("stabilizer component index out of range");
            comps.emplace_back(idx, *tv.poly());
          }
          l.w = Stabilizer::polynomials(std::move(comps), k);
        } else {
          throw ValidationError("unknown stabilizer kind " + kind);
        }
        levels.push_back(std::move(l));
      }
      return StabilizingSystem(std::move(levels), j.value("c", 1.0));
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("malformed system description: ") + e.what());
    } catch (const std::invalid_argument&) {
      throw ValidationError("malformed stabilizer component index");
    }
  }

  // Implicit problem solved by the level-k stabilizer: free coordinate d,
  // unknowns J, equations t_i(..) - t_i(base) for i in I.
  ImplicitProblem level_problem(const Targets& t, std::span<const double> x_prefix, int k) const {
    const auto& l = level(k);
    auto base = std::make_shared<std::vector<double>>(point(t, x_prefix));
    auto ref = std::make_shared<std::vector<double>>();
    for (int i : l.I) ref->push_back(target_value(t, i, *base));
    ImplicitProblem p;
    const std::vector<int> I = l.I, J = l.J;
    const int d = l.d, off = block_offset(k);
    auto assemble = [base, J, d, off](double x, const Vec& y) {
      std::vector<double> a = *base;
      a[static_cast<std::size_t>(off + d - 1)] = x;
      for (std::size_t s = 0; s < J.size(); ++s) a[static_cast<std::size_t>(off + J[s] - 1)] = y(static_cast<Eigen::Index>(s));
      return a;
    };
    const Targets* tp = &t;
    p.f = [assemble, ref, I, tp](double x, const Vec& y) {
      const auto a = assemble(x, y);
      Vec r(static_cast<Eigen::Index>(I.size()));
      for (std::size_t s = 0; s < I.size(); ++s)
        r(static_cast<Eigen::Index>(s)) = target_value(*tp, I[s], a) - (*ref)[s];
      return r;
    };
    p.jac_y = [assemble, I, J, off, tp](double x, const Vec& y) {
      const auto a = assemble(x, y);
      Mat m(static_cast<Eigen::Index>(I.size()), static_cast<Eigen::Index>(J.size()));
      for (std::size_t r = 0; r < I.size(); ++r)
        for (std::size_t c = 0; c < J.size(); ++c)
          m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = target_partial(*tp, I[r], a, off + J[c]);
      return m;
    };
    p.jac_x = [assemble, I, d, off, tp](double x, const Vec& y) {
      const auto a = assemble(x, y);
      Vec h(static_cast<Eigen::Index>(I.size()));
      for (std::size_t r = 0; r < I.size(); ++r) h(static_cast<Eigen::Index>(r)) = target_partial(*tp, I[r], a, off + d);
      return h;
    };
    return p;
  }

  static double target_value(const Targets& t, int i, std::span<const double> a) {
    return i <= static_cast<int>(t.size()) ? t[static_cast<std::size_t>(i - 1)].value(a) : 0.0;
  }
  static double target_partial(const Targets& t, int i, std::span<const double> a, int idx) {
    return i <= static_cast<int>(t.size()) ? t[static_cast<std::size_t>(i - 1)].partial(a, idx) : 0.0;
  }

  ContinuationOptions implicit_options;

 private:
  // Writes w~_k(x_1..x_k) into block k of `a` (blocks < k already filled).
  void fill_block(const Targets& t, std::vector<double>& a, int k, std::span<const double> x) const {
    const auto& l = level(k);
    const int off = block_offset(k);
    const double xk = x.back();
    switch (l.w.kind) {
      case Stabilizer::Kind::Identity:
        a[static_cast<std::size_t>(off + l.d - 1)] = xk;
        break;
      case Stabilizer::Kind::Explicit: {
        const auto v = l.w.fn(x);
        a[static_cast<std::size_t>(off + l.d - 1)] = v[static_cast<std::size_t>(l.d - 1)];
        for (int j : l.J) a[static_cast<std::size_t>(off + j - 1)] = v[static_cast<std::size_t>(j - 1)];
        break;
      }
      case Stabilizer::Kind::Implicit: {
        const auto prefix = x.subspan(0, x.size() - 1);
        const auto p = level_problem(t, prefix, k);
        Vec y0(static_cast<Eigen::Index>(l.J.size()));
        for (std::size_t s = 0; s < l.J.size(); ++s) y0(static_cast<Eigen::Index>(s)) = l.b[static_cast<std::size_t>(l.J[s] - 1)];
        ContinuationOptions o = implicit_options;
        o.tube = 1.0;
        const Vec y = solve_along(p, l.b[static_cast<std::size_t>(l.d - 1)], y0, xk, o);
        a[static_cast<std::size_t>(off + l.d - 1)] = xk;
        for (std::size_t s = 0; s < l.J.size(); ++s) a[static_cast<std::size_t>(off + l.J[s] - 1)] = y(static_cast<Eigen::Index>(s));
        break;
      }
    }
  }

  std::vector<Level> levels_;
  double c_ = 1.0;
};

// Trivial system: identity stabilizers, empty index sets, V_k = U_1 x ... x U_k.
inline StabilizingSystem trivial_system(int depth, double lo = 0.1, double hi = 0.9) {
  std::vector<Level> lv;
  BoxUnion v(0);
  for (int k = 1; k <= depth; ++k) {
    Level l;
    l.U = {lo, hi};
    v = v.times(l.U);
    l.V = v;
    l.d = 1;
    l.b.assign(static_cast<std::size_t>(k + 1), 0.5 * (lo + hi));
    lv.push_back(std::move(l));
  }
  return StabilizingSystem(std::move(lv));
}

// Sample of x in V_{k-1} x U_k (or in V_k when `inside`).
inline std::vector<double> sample_level(const StabilizingSystem& s, int k, bool inside, RandomStream& r) {
  const auto& l = s.level(k);
  if (inside) return l.V.sample(r);
  std::vector<double> x = k > 1 ? s.level(k - 1).V.sample(r) : std::vector<double>{};
  x.push_back(r.uniform(l.U.lo, l.U.hi));
  return x;
}

// ---------------------------------------------------------------------------
// Nonsingular minor and invariance checks

struct SampleSpec {
  std::uint64_t points = 200;
  std::uint64_t seed = 0;
  double det_floor = 1e-8;
  double tolerance = 1e-8;
};

struct LevelCheck {
  int k = 0;
  bool vacuous = false;
  double min_abs_det = std::numeric_limits<double>::infinity();
  double max_p2_deviation = 0.0;
  double max_invariant_deviation = 0.0;
  bool passed = true;

  Json to_json() const {
    Json j{{"k", k}, {"vacuous", vacuous}, {"passed", passed}};
    if (!vacuous) {
      j["min_abs_det"] = min_abs_det;
      j["max_p2_deviation"] = max_p2_deviation;
      j["max_invariant_deviation"] = max_invariant_deviation;
    }
    return j;
  }
};

struct P1P2Report {
  std::vector<LevelCheck> levels;
  bool passed = true;

  Json to_json() const {
    Json lv = Json::array();
    for (const auto& l : levels) lv.push_back(l.to_json());
    return Json{{"passed", passed}, {"levels", lv}};
  }
};

inline P1P2Report check_P1_P2(const StabilizingSystem& s, const Targets& t, const SampleSpec& spec = {}) {
  P1P2Report rep;
  for (int k = 1; k <= s.depth(); ++k) {
    const auto& l = s.level(k);
    LevelCheck lc;
    lc.k = k;
    if (l.I.empty() && l.J.empty()) {
      lc.vacuous = true;
      rep.levels.push_back(lc);
      continue;
    }
    RandomStream r(spec.seed, 0x703170, static_cast<std::uint64_t>(k));
    const int off = block_offset(k);
    for (std::uint64_t n = 0; n < spec.points; ++n) {
      // I x J minor of M_k nonsingular on V_{k-1} x U_k
      const auto x = sample_level(s, k, false, r);
      const auto a = s.point(t, x);
      const Mat sub = submatrix(jacobian_Mk(t, k, a), l.I, l.J);
      lc.min_abs_det = std::min(lc.min_abs_det, std::abs(sub.determinant()));
      // Stabilizer invariants: d-coordinate follows x_k, base point is fixed.
      lc.max_invariant_deviation =
          std::max(lc.max_invariant_deviation, std::abs(a[static_cast<std::size_t>(off + l.d - 1)] - x.back()));
      std::vector<double> xb = x;
      xb.back() = l.b[static_cast<std::size_t>(l.d - 1)];
      const auto ab = s.point(t, xb);
      for (int j : l.J)
        lc.max_invariant_deviation = std::max(
            lc.max_invariant_deviation, std::abs(ab[static_cast<std::size_t>(off + j - 1)] - l.b[static_cast<std::size_t>(j - 1)]));
      // targets in I unchanged by the stabilizer on V_k
      const auto xv = sample_level(s, k, true, r);
      const auto av = s.point(t, xv);
      const auto a0 = s.point(t, std::span<const double>(xv).subspan(0, xv.size() - 1));
      for (int i : l.I)
        lc.max_p2_deviation = std::max(lc.max_p2_deviation, std::abs(StabilizingSystem::target_value(t, i, av) -
                                                                       StabilizingSystem::target_value(t, i, a0)));
    }
    lc.passed = lc.min_abs_det >= spec.det_floor && lc.max_p2_deviation <= spec.tolerance &&
                lc.max_invariant_deviation <= spec.tolerance;
    rep.passed = rep.passed && lc.passed;
    rep.levels.push_back(lc);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// c-strength and zero-set shrinking

// min over sampled prefixes of |slice| / |U_k|, per level.
inline std::vector<double> strength_profile(const StabilizingSystem& s, std::uint64_t samples = 200,
                                            std::uint64_t seed = 0) {
  std::vector<double> out;
  RandomStream r(seed, 0x737472);
  for (int k = 1; k <= s.depth(); ++k) {
    const auto& l = s.level(k);
    double worst = std::numeric_limits<double>::infinity();
    if (k == 1) {
      std::vector<Interval> iv;
      for (const auto& b : l.V.boxes()) iv.push_back(b[0]);
      worst = total_length(iv) / l.U.length();
    } else {
      for (std::uint64_t n = 0; n < samples; ++n) {
        const auto x = s.level(k - 1).V.sample(r);
        worst = std::min(worst, total_length(l.V.slice(x)) / l.U.length());
      }
    }
    out.push_back(worst);
  }
  return out;
}

struct ShrinkOptions {
  int resolution = 0;  // grid cells per axis; 0 picks about 4096 cells in total
  std::uint64_t samples = 2000;
  std::uint64_t seed = 0;
};

struct ShrinkResult {
  std::vector<BoxUnion> V;  // new V_1..V_ell
  double min_abs_T = 0.0;   // sampled on V_ell
  double retention = 0.0;   // min sampled slice fraction across levels
  std::size_t removed_cells = 0;

  Json to_json() const {
    Json v = Json::array();
    for (const auto& b : V) v.push_back(b.to_json());
    return Json{{"V", v}, {"min_abs_T", min_abs_T}, {"retention", retention}, {"removed_cells", removed_cells}};
  }
};

// Removes grid cells near the zero set of T from V_ell, then prunes lower
// levels whose fibres lost more than (c - c') of U (heuristic: zeros are
// located by sign changes and near-zero values at cell corners and centres).
inline ShrinkResult shrink_zero_set(const std::vector<Interval>& U, const std::vector<BoxUnion>& V,
                                    const std::function<double(std::span<const double>)>& T, double c,
                                    double c_prime, const ShrinkOptions& opt = {}) {
  const int ell = static_cast<int>(U.size());
  if (ell < 1 || static_cast<int>(V.size()) != ell) throw ValidationError("shrink needs matching U and V levels");
  if (!(c_prime < c)) throw ValidationError("c' must be smaller than c");
  const int res = opt.resolution > 0 ? opt.resolution
                                     : std::max(8, static_cast<int>(std::pow(4096.0, 1.0 / ell)));
  std::uint64_t cells = 1;
  for (int i = 0; i < ell; ++i) {
    cells *= static_cast<std::uint64_t>(res);
    if (cells > 20000000) throw BudgetError("zero-set grid too large");
  }
  auto cell_box = [&](std::uint64_t id, int dim) {
    Box b(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      const int c_i = static_cast<int>(id % static_cast<std::uint64_t>(res));
      id /= static_cast<std::uint64_t>(res);
      const auto& u = U[static_cast<std::size_t>(i)];
      b[static_cast<std::size_t>(i)] = {u.lo + u.length() * c_i / res, u.lo + u.length() * (c_i + 1) / res};
    }
    return b;
  };
  // Scale of T for the near-zero threshold; also certifies T is not identically zero.
  RandomStream r(opt.seed, 0x7a6572);
  double scale = 0;
  for (std::uint64_t n = 0; n < opt.samples; ++n) scale = std::max(scale, std::abs(T(V.back().sample(r))));
  if (!(scale > 1e-300)) throw ToleranceError("cannot certify that T is not identically zero on V");
  const double thresh = 1e-9 * scale;
  // Level ell: flag cells whose corners/centre straddle or touch zero.
  std::vector<char> flagged(cells, 0);
  std::size_t removed = 0;
  for (std::uint64_t id = 0; id < cells; ++id) {
    const Box b = cell_box(id, ell);
    if (V.back().intersect(b).empty()) continue;
    bool pos = false, neg = false, small = false;
    std::vector<double> p(static_cast<std::size_t>(ell));
    for (std::uint64_t corner = 0; corner <= (1ull << ell); ++corner) {
      for (int i = 0; i < ell; ++i) {
        const auto& s = b[static_cast<std::size_t>(i)];
        p[static_cast<std::size_t>(i)] = corner == (1ull << ell) ? 0.5 * (s.lo + s.hi) : ((corner >> i) & 1 ? s.hi : s.lo);
      }
      const double v = T(p);
      pos = pos || v > 0;
      neg = neg || v < 0;
      small = small || std::abs(v) <= thresh;
    }
    if ((pos && neg) || small) {
      flagged[id] = 1;
      ++removed;
    }
  }
  // Lower levels: a cell is removed when too much of its fibre is.
  std::vector<std::vector<char>> flags(static_cast<std::size_t>(ell));
  flags.back() = flagged;
  const double eps = c - c_prime;
  for (int lv = ell - 1; lv >= 1; --lv) {
    std::uint64_t n = 1;
    for (int i = 0; i < lv; ++i) n *= static_cast<std::uint64_t>(res);
    std::vector<char> f(n, 0);
    const auto& up = flags[static_cast<std::size_t>(lv)];
    for (std::uint64_t id = 0; id < n; ++id) {
      int lost = 0;
      for (int j = 0; j < res; ++j) lost += up[id + n * static_cast<std::uint64_t>(j)];
      f[id] = static_cast<double>(lost) / res > eps ? 1 : 0;
    }
    flags[static_cast<std::size_t>(lv - 1)] = std::move(f);
  }
  // Rebuild top-down: kept cells intersected with the old sets.
  ShrinkResult out;
  out.removed_cells = removed;
  for (int lv = 1; lv <= ell; ++lv) {
    std::uint64_t n = 1;
    for (int i = 0; i < lv; ++i) n *= static_cast<std::uint64_t>(res);
    const std::uint64_t parent_n = n / static_cast<std::uint64_t>(res);
    BoxUnion nv(lv);
    for (std::uint64_t id = 0; id < n; ++id) {
      if (flags[static_cast<std::size_t>(lv - 1)][id]) continue;
      if (lv > 1 && flags[static_cast<std::size_t>(lv - 2)][id % parent_n]) continue;
      const BoxUnion kept = V[static_cast<std::size_t>(lv - 1)].intersect(cell_box(id, lv));
      for (const auto& piece : kept.boxes()) nv.add(piece);
    }
    if (lv == 1) {
      std::vector<Interval> iv;
      for (const auto& b : nv.boxes()) iv.push_back(b[0]);
      BoxUnion merged(1);
      for (const auto& i : merge_intervals(iv)) merged.add(Box{i});
      nv = merged;
    }
    if (nv.empty()) throw ToleranceError("shrinking removed all of V at level " + std::to_string(lv));
    out.V.push_back(std::move(nv));
  }
  // Post-conditions, by sampling.
  out.min_abs_T = std::numeric_limits<double>::infinity();
  for (std::uint64_t n = 0; n < opt.samples; ++n) out.min_abs_T = std::min(out.min_abs_T, std::abs(T(out.V.back().sample(r))));
  out.retention = std::numeric_limits<double>::infinity();
  {
    std::vector<Interval> iv;
    for (const auto& b : out.V[0].boxes()) iv.push_back(b[0]);
    out.retention = total_length(iv) / U[0].length();
  }
  for (int lv = 2; lv <= ell; ++lv)
    for (std::uint64_t n = 0; n < 200; ++n) {
      const auto x = out.V[static_cast<std::size_t>(lv - 2)].sample(r);
      out.retention = std::min(out.retention, total_length(out.V[static_cast<std::size_t>(lv - 1)].slice(x)) /
                                                   U[static_cast<std::size_t>(lv - 1)].length());
    }
  if (out.retention < c_prime) throw ToleranceError("shrunk system keeps only " + format_number(out.retention) + " of U");
  if (!(out.min_abs_T > 0)) throw ToleranceError("T vanishes on the shrunk set");
  return out;
}

// ---------------------------------------------------------------------------
// Make-excellent step

struct ExcellentOptions {
  std::uint64_t samples = 200;
  std::uint64_t seed = 0;
  double rank_tol = 1e-7;
  double det_floor = 1e-8;
  int max_retries = 6;
};

struct ExcellentResult {
  StabilizingSystem system;
  bool grown = false;
  bool certified = false;
  std::string certificate;
  int rank = 0;             // maximal sampled rank of M_m
  int j_before = 0;
  int j_after = 0;
  double max_variation = 0.0;  // max |t_l(w~_{<=m}(x)) - t_l(w~_{<m}, b_m)| over l <= m
  P1P2Report check;

  Json to_json() const {
    return Json{{"grown", grown},         {"certified", certified},       {"certificate", certificate},
                {"rank", rank},           {"J_before", j_before},         {"J_after", j_after},
                {"max_variation", max_variation}, {"check", check.to_json()}, {"system", system.to_json()}};
  }
};

inline double level_variation(const StabilizingSystem& s, const Targets& t, int m, std::uint64_t samples,
                              std::uint64_t seed) {
  RandomStream r(seed, 0x766172);
  double worst = 0;
  for (std::uint64_t n = 0; n < samples; ++n) {
    const auto x = sample_level(s, m, false, r);
    const auto a = s.point(t, x);
    const auto a0 = s.point(t, std::span<const double>(x).subspan(0, x.size() - 1));
    for (int l = 1; l <= m; ++l)
      worst = std::max(worst, std::abs(StabilizingSystem::target_value(t, l, a) - StabilizingSystem::target_value(t, l, a0)));
  }
  return worst;
}

inline ExcellentResult make_excellent_step(const StabilizingSystem& s, const Targets& t, int m, double eps,
                                           double c_prime, const ExcellentOptions& opt = {}) {
  if (m < 1 || m > s.depth()) throw ValidationError("level m must lie in [1, depth]");
  if (!(eps > 0)) throw ValidationError("epsilon must be positive");
  SampleSpec spec{opt.samples, opt.seed, opt.det_floor, 1e-8};
  const auto pre = check_P1_P2(s, t, spec);
  if (!pre.passed) throw ValidationError("system does not stabilize the targets");
  ExcellentResult res;
  const auto& lm = s.level(m);
  res.j_before = static_cast<int>(lm.J.size());
  // Maximal rank over samples, preferring points with x_m near b_{m,d}.
  RandomStream r(opt.seed, 0x657863, static_cast<std::uint64_t>(m));
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  int rmax = -1;
  for (std::uint64_t n = 0; n <= opt.samples; ++n) {
    auto x = sample_level(s, m, false, r);
    if (n == 0) x.back() = lm.b[static_cast<std::size_t>(lm.d - 1)];
    const int rk = numeric_rank(jacobian_Mk(t, m, s.point(t, x)), opt.rank_tol);
    const double dist = std::abs(x.back() - lm.b[static_cast<std::size_t>(lm.d - 1)]);
    if (rk > rmax || (rk == rmax && dist < best_dist)) {
      rmax = rk;
      best = x;
      best_dist = dist;
    }
  }
  res.rank = rmax;
  if (rmax == static_cast<int>(lm.J.size())) {
    res.system = s;
    res.certified = true;
    res.certificate = rmax == 0 ? "0-excellent trivially"
                                : std::to_string(m) + "-excellent: rank " + std::to_string(rmax) + " equals |J_m|";
    res.j_after = res.j_before;
    res.check = pre;
    res.max_variation = level_variation(s, t, m, opt.samples, opt.seed);
    return res;
  }
  // Re-seed b_m at the chosen point and extend I, J greedily to full rank.
  const auto a_star = s.point(t, best);
  std::vector<double> b_new(a_star.begin() + block_offset(m), a_star.begin() + block_offset(m + 1));
  const Mat M = jacobian_Mk(t, m, a_star);
  std::vector<int> I = lm.I, J = lm.J;
  // Greedy growth, taking the best-conditioned extension each time.
  while (static_cast<int>(J.size()) < rmax) {
    double best_sv = opt.rank_tol;
    std::vector<int> bestI, bestJ;
    for (int i = 1; i <= m; ++i) {
      if (std::find(I.begin(), I.end(), i) != I.end()) continue;
      for (int j = 1; j <= m + 1; ++j) {
        if (std::find(J.begin(), J.end(), j) != J.end()) continue;
        auto I2 = I, J2 = J;
        I2.push_back(i);
        J2.push_back(j);
        std::sort(I2.begin(), I2.end());
        std::sort(J2.begin(), J2.end());
        Eigen::JacobiSVD<Mat> svd(submatrix(M, I2, J2));
        const double sv = svd.singularValues().minCoeff();
        if (sv > best_sv) {
          best_sv = sv;
          bestI = I2;
          bestJ = J2;
        }
      }
    }
    if (bestJ.empty()) throw ToleranceError("could not extend the index sets to the sampled rank");
    I = bestI;
    J = bestJ;
  }
  int d = lm.d;
  if (std::find(J.begin(), J.end(), d) != J.end())
    for (d = 1; std::find(J.begin(), J.end(), d) != J.end(); ++d) {
    }
  for (double& v : b_new) v = std::clamp(v, 1e-9, 1 - 1e-9);
  double e = eps;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt, e *= 0.5) {
    std::vector<Level> lv(s.levels().begin(), s.levels().end());
    Level& L = lv[static_cast<std::size_t>(m - 1)];
    L.b = b_new;
    L.I = I;
    L.J = J;
    L.d = d;
    L.w = Stabilizer::implicit();
    const double centre = b_new[static_cast<std::size_t>(d - 1)];
    L.U = {std::max(0.0, centre - e), std::min(1.0, centre + e)};
    // Lower levels: drop prefixes where the new minor vanishes.
    L.V = m > 1 ? lv[static_cast<std::size_t>(m - 2)].V.times(L.U) : BoxUnion(0).times(L.U);
    for (int k = m + 1; k <= s.depth(); ++k) {
      Level& H = lv[static_cast<std::size_t>(k - 1)];
      H.I.clear();
      H.J.clear();
      H.d = 1;
      H.w = Stabilizer::identity();
      const double c1 = H.b[0];
      H.U = {std::max(0.0, c1 - e), std::min(1.0, c1 + e)};
      H.V = lv[static_cast<std::size_t>(k - 2)].V.times(H.U);
    }
    if (m > 1) {
      std::vector<Interval> U;
      std::vector<BoxUnion> V;
      for (int k = 1; k < m; ++k) {
        U.push_back(lv[static_cast<std::size_t>(k - 1)].U);
        V.push_back(lv[static_cast<std::size_t>(k - 1)].V);
      }
      StabilizingSystem probe(lv, s.c());
      auto T = [&](std::span<const double> x) {
        std::vector<double> a = probe.point(t, x);
        return submatrix(jacobian_Mk(t, m, a), I, J).determinant();
      };
      try {
        const auto sh = shrink_zero_set(U, V, T, s.c(), c_prime, {0, 500, opt.seed});
        for (int k = 1; k < m; ++k) lv[static_cast<std::size_t>(k - 1)].V = sh.V[static_cast<std::size_t>(k - 1)];
      } catch (const ToleranceError&) {
      }
      for (int k = m; k <= s.depth(); ++k)
        lv[static_cast<std::size_t>(k - 1)].V = lv[static_cast<std::size_t>(k - 2)].V.times(lv[static_cast<std::size_t>(k - 1)].U);
    }
    try {
      StabilizingSystem next(std::move(lv), c_prime);
      next.implicit_options.det_floor = opt.det_floor;
      auto chk = check_P1_P2(next, t, spec);
      if (!chk.passed) continue;
      // Certification: the rank of M_m equals |J'_m| on samples.
      RandomStream r2(opt.seed, 0x636572, static_cast<std::uint64_t>(m));
      bool excellent = true;
      for (std::uint64_t n = 0; n < opt.samples && excellent; ++n) {
        const auto x = sample_level(next, m, false, r2);
        excellent = numeric_rank(jacobian_Mk(t, m, next.point(t, x)), opt.rank_tol) == static_cast<int>(J.size());
      }
      res.system = next;
      res.grown = J.size() > lm.J.size() && I.size() > lm.I.size();
      res.certified = excellent;
      res.certificate = excellent ? std::to_string(m) + "-excellent: rank " + std::to_string(J.size()) + " equals |J_m|"
                                  : "rank exceeds |J_m| after the step";
      res.j_after = static_cast<int>(J.size());
      res.check = chk;
      res.max_variation = level_variation(next, t, m, opt.samples, opt.seed);
      return res;
    } catch (const ToleranceError&) {
      continue;
    } catch (const ValidationError&) {
      continue;
    }
  }
  throw ToleranceError("make-excellent step failed to build a stabilizer on a shrunk interval");
}

// ---------------------------------------------------------------------------
// JSON helpers for the command line

struct SystemFile {
  StabilizingSystem system;
  Targets targets;
};

inline SystemFile load_system(const Json& j) {
  SystemFile f;
  f.system = StabilizingSystem::from_json(j);
  if (j.contains("targets")) {
    if (!j.at("targets").is_array()) throw ValidationError("targets must be a list");
    for (const auto& t : j.at("targets")) f.targets.push_back(Target::from_json(t));
  }
  return f;
}

inline Json system_file_json(const StabilizingSystem& s, const Targets& t) {
  Json j = s.to_json();
  Json tj = Json::array();
  for (const auto& x : t) tj.push_back(x.to_json());
  j["targets"] = tj;
  return j;
}

}  // namespace graphonforge::stab
