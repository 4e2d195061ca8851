#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "graphonforge/density.hpp"
#include "graphonforge/fixtures.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/series.hpp"
#include "graphonforge/stabilize.hpp"
#include "graphonforge/wpz.hpp"

// End-to-end self-checks shared by the command line and the acceptance runner.
// Each check is deterministic for a fixed seed; timings are kept out of the
// JSON so that repeated reports compare byte for byte.

namespace graphonforge::verify {

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::uint64_t samples = 1000000;  // Monte Carlo budget for the density comparisons
};

struct CheckResult {
  std::string id;
  std::string title;
  bool passed = false;
  Json detail = Json::object();
  double seconds = 0.0;
  double time_limit = 0.0;  // 0: none

  bool within_time() const { return time_limit <= 0 || seconds < time_limit; }
  Json to_json() const { return Json{{"id", id}, {"title", title}, {"passed", passed}, {"detail", detail}}; }
};

namespace detail {

template <class F>
CheckResult timed(std::string id, std::string title, double limit, F&& body) {
  CheckResult r;
  r.id = std::move(id);
  r.title = std::move(title);
  r.time_limit = limit;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail["error"] = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline double hypot_sigma(double a, double b) { return std::sqrt(a * a + b * b); }

// p(n) by Euler's pentagonal recurrence.
inline std::vector<std::uint64_t> partition_numbers(int n) {
  std::vector<long long> p(static_cast<std::size_t>(n + 1), 0);
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
  return {p.begin(), p.end()};
}

inline std::shared_ptr<StepGraphon> random_step(RandomStream& r) {
  const int k = 2 + static_cast<int>(r.below(4));
  std::vector<double> sizes(static_cast<std::size_t>(k));
  double total = 0;
  for (auto& s : sizes) total += (s = r.uniform(0.2, 1.0));
  for (auto& s : sizes) s /= total;
  sizes.back() = 1.0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) sizes.back() -= sizes[i];
  std::vector<std::vector<double>> v(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j)
      v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
          r.uniform();
  return std::make_shared<StepGraphon>(sizes, v);
}

// Admissible sequence with L = 8, N = 6: constant plus one linear term per
// nontrivial triple, with bounds enclosing the range over the unit box.
inline BoundingSequence random_bounding(RandomStream& r) {
  BoundingSequence s(8, 6);
  for (int i = 1; i <= 8; ++i) {
    if (r.uniform() < 0.3) continue;
    const double c0 = r.uniform(0.005, 0.02);
    const int var = 1 + static_cast<int>(r.below(4));
    const std::uint64_t rk = rank(Multiset(std::vector<int>{var}));
    const double c1 = r.uniform(-0.9, 0.9) * std::min(coefficient_bound(rk), c0);
    MonomialPolynomial p;
    p.set(1, c0);
    if (c1 != 0.0) p.set(rk, c1);
    const double lo = std::max(0.0, c0 - std::abs(c1) - r.uniform(0.0, 0.004));
    const double hi = c0 + std::abs(c1) + r.uniform(0.0, 0.004);
    s.set_triple(static_cast<std::uint64_t>(i), {p, lo, hi});
  }
  return s;
}

inline std::vector<double> random_z(RandomStream& r, int n = 6) {
  std::vector<double> z(static_cast<std::size_t>(n));
  for (auto& v : z) v = r.uniform();
  return z;
}

// Point of part C with the given third and coordinate, biased to shallow cells.
inline double structured_c(RandomStream& r) {
  const int third = static_cast<int>(r.below(3));
  const int k = 1 + static_cast<int>(r.below(8));
  return (third + coord_low(k) + coord_width(k) * r.uniform()) / 3.0;
}

inline graphonforge::Interval part_interval(int p) { return {wpz::part_start(p), wpz::part_end(p)}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// 1. Rooted decorated evaluation on the two-part example

inline CheckResult check_rooted(const VerifyOptions& o) {
  return detail::timed("rooted", "decorated rooted densities on the two-part example", 5.0, [&](CheckResult& r) {
    auto w = std::make_shared<StepGraphon>(std::vector<double>{0.5, 0.5},
                                           std::vector<std::vector<double>>{{2.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0}},
                                           std::vector<std::string>{"A", "B"});
    const auto pg = PartitionedGraphon::from(w);
    DecoratedGraph g1(3, 1, {"A", "A", "A"});
    g1.set(0, 1, PairSpec::Edge);
    g1.set(0, 2, PairSpec::Edge);
    g1.set(1, 2, PairSpec::Edge);
    DecoratedGraph g2(3, 1, {"A", "B", "B"});
    g2.set(0, 1, PairSpec::NonEdge);
    g2.set(0, 2, PairSpec::NonEdge);
    g2.set(1, 2, PairSpec::Edge);
    DecoratedGraph g3(4, 1, {"A", "A", "B", "B"});
    g3.set(0, 1, PairSpec::Edge);
    g3.set(0, 2, PairSpec::Edge);
    g3.set(2, 3, PairSpec::Edge);
    g3.set(0, 3, PairSpec::NonEdge);
    g3.set(1, 2, PairSpec::NonEdge);
    g3.set(1, 3, PairSpec::NonEdge);
    const DecoratedGraph* gs[] = {&g1, &g2, &g3};
    const double expected[] = {8.0 / 27, 4.0 / 9, 16.0 / 243};
    DensityOptions mc;
    mc.method = DensityMethod::MonteCarlo;
    mc.samples = o.samples;
    mc.seed = o.seed;
    r.passed = true;
    Json rows = Json::array();
    for (int i = 0; i < 3; ++i) {
      const double exact = tau_rooted(*gs[i], pg, {0.2}).value;
      const auto e = tau_rooted(*gs[i], pg, {0.2}, mc);
      const bool ok = std::abs(exact - expected[i]) <= 1e-12 && std::abs(e.value - expected[i]) <= 4 * e.sigma + 1e-12;  // rounding floor
      r.passed = r.passed && ok;
      rows.push_back(Json{{"expected", expected[i]}, {"exact", exact}, {"mc", e.value}, {"sigma", e.sigma}, {"ok", ok}});
    }
    r.detail["graphs"] = rows;
  });
}

// ---------------------------------------------------------------------------
// 2. Multiset order

inline CheckResult check_multisets(const VerifyOptions&) {
  return detail::timed("multisets", "multiset order: first elements, sum bound, round trip, grade counts", 2.0,
                       [&](CheckResult& r) {
                         const bool first = unrank(1) == Multiset{} && unrank(2) == Multiset{1} &&
                                            unrank(3) == Multiset{2} && unrank(4) == (Multiset{1, 1});
                         std::uint64_t sum_violations = 0, round_trip_failures = 0;
                         for (std::uint64_t i = 1; i <= 100000; ++i)
                           if (static_cast<std::uint64_t>(unrank(i).sum()) > i) ++sum_violations;
                         for (std::uint64_t i = 1; i <= 10000; ++i)
                           if (rank(unrank(i)) != i) ++round_trip_failures;
                         const auto p = detail::partition_numbers(40);
                         int grade_mismatches = 0;
                         for (int n = 0; n <= 40; ++n)
                           if (PartitionTable::instance().partitions(n) != p[static_cast<std::size_t>(n)]) ++grade_mismatches;
                         r.passed = first && sum_violations == 0 && round_trip_failures == 0 && grade_mismatches == 0;
                         r.detail = Json{{"first_four", first},
                                         {"sum_violations", sum_violations},
                                         {"round_trip_failures", round_trip_failures},
                                         {"grade_mismatches", grade_mismatches}};
                       });
}

// ---------------------------------------------------------------------------
// 3. Density suite on random step graphons

inline CheckResult check_densities(const VerifyOptions& o) {
  return detail::timed("densities", "induced densities sum to one; Monte Carlo agrees with exact", 60.0,
                       [&](CheckResult& r) {
                         RandomStream rng(o.seed, 0x64656e);
                         std::vector<SmallGraph> graphs = isomorphism_classes(3);
                         for (const auto& h : isomorphism_classes(4)) graphs.push_back(h);
                         double worst_sum = 0;
                         int pairs = 0, mc_failures = 0;
                         double worst_z = 0;
                         for (int g = 0; g < 5; ++g) {
                           const auto w = detail::random_step(rng);
                           for (int k : {3, 4}) {
                             double s = 0;
                             for (const auto& h : isomorphism_classes(k)) s += density(h, *w).value;
                             worst_sum = std::max(worst_sum, std::abs(s - 1.0));
                           }
                           for (int t = 0; t < 10; ++t) {
                             const auto& h = graphs[static_cast<std::size_t>(rng.below(graphs.size()))];
                             DensityOptions mc;
                             mc.method = DensityMethod::MonteCarlo;
                             mc.samples = 100000;
                             mc.seed = mix64(o.seed + static_cast<std::uint64_t>(pairs));
                             const double exact = tau(h, *w).value;
                             const auto e = tau(h, *w, mc);
                             const double z = std::abs(e.value - exact) / std::max(e.sigma, 1e-300);
                             worst_z = std::max(worst_z, std::abs(e.value - exact) <= 1e-15 ? 0.0 : z);
                             if (std::abs(e.value - exact) > 4 * e.sigma + 1e-15) ++mc_failures;
                             ++pairs;
                           }
                         }
                         r.passed = worst_sum <= 1e-9 && mc_failures == 0;
                         r.detail = Json{{"max_sum_deviation", worst_sum},
                                         {"pairs", pairs},
                                         {"mc_failures", mc_failures},
                                         {"max_sigma_ratio", worst_z}};
                       });
}

// ---------------------------------------------------------------------------
// 4. Structure of the z-indexed graphon

inline CheckResult check_wpz_structure(const VerifyOptions& o) {
  return detail::timed("wpz_structure", "symmetry, Q-column identity, relative degrees, part degrees", 0.0,
                       [&](CheckResult& r) {
                         namespace P = wpz;
                         const auto w = build_wpz(reference_bounding(), reference_z());
                         RandomStream rng(o.seed, 0x777073);
                         // Symmetry.
                         std::uint64_t asym = 0;
                         for (int t = 0; t < 100000; ++t) {
                           const int px = static_cast<int>(rng.below(P::kParts)), py = static_cast<int>(rng.below(P::kParts));
                           const double x = P::embed(px, t % 2 ? detail::structured_c(rng) : rng.uniform());
                           const double y = P::embed(py, t % 2 ? detail::structured_c(rng) : rng.uniform());
                           if ((*w)(x, y) != (*w)(y, x)) ++asym;
                         }
                         // Q column: 12 minus the relative row integrals over the inner parts.
                         QuadratureSpec mid{QuadratureSpec::Method::Midpoint};
                         double q_dev = 0;
                         for (int p = 0; p < P::kInner; ++p)
                           for (int t = 0; t < 1000; ++t) {
                             const double x = P::embed(p, t % 2 ? detail::structured_c(rng) : rng.uniform());
                             const double y = P::embed(P::Q, rng.uniform());
                             double s = 0;
                             for (int z = 0; z < P::kInner; ++z)
                               s += relative_degree(*w, x, IntervalSet{detail::part_interval(z)}, mid).value;
                             q_dev = std::max(q_dev, std::abs((*w)(x, y) - (12.0 - s) / 12.0));
                           }
                         // Relative degrees of C points into C and E.
                         double rel_dev = 0;
                         for (int t = 0; t < 1000; ++t) {
                           const double u = t % 2 ? detail::structured_c(rng) : rng.uniform();
                           const double expect = u < 2.0 / 3.0 ? std::ldexp(1.0, -coord(3 * u)) / 3.0 : 0.0;
                           const double x = P::embed(P::C, u);
                           for (int part : {P::C, P::E})
                             rel_dev = std::max(rel_dev, std::abs(relative_degree(*w, x, IntervalSet{detail::part_interval(part)},
                                                                                  mid).value -
                                                                  expect));
                         }
                         // Degrees per part.
                         const auto prof = part_degree_profile(*w, 200, o.seed);
                         double spread = 0;
                         for (const auto& d : prof) spread = std::max(spread, d.spread());
                         const double deg_q = prof[static_cast<std::size_t>(P::Q)].mean;
                         const double deg_a = prof[static_cast<std::size_t>(P::A)].mean;
                         const bool a_matches_construction = std::abs(deg_a - construction_degree(P::A)) <= 1e-9;
                         const bool a_discrepancy = std::abs(construction_degree(P::A) - tabulated_degree(P::A)) > 1e-12;
                         Json table = Json::array();
                         for (int p = 0; p < P::kParts; ++p)
                           table.push_back(Json{{"part", P::part_name(p)},
                                                {"measured_times_2500", prof[static_cast<std::size_t>(p)].mean * 2500},
                                                {"tabulated_times_2500", tabulated_degree(p) * 2500}});
                         r.passed = asym == 0 && q_dev <= 1e-8 && rel_dev <= 1e-6 && spread <= 1e-6 &&
                                    deg_q > 1300.0 / 2500 && a_matches_construction;
                         r.detail = Json{{"asymmetric_pairs", asym},
                                         {"q_column_max_deviation", q_dev},
                                         {"relative_degree_max_deviation", rel_dev},
                                         {"degree_spread", spread},
                                         {"degree_Q_times_2500", deg_q * 2500},
                                         {"degree_A_times_2500", deg_a * 2500},
                                         {"degree_A_tabulated_times_2500", tabulated_degree(P::A) * 2500},
                                         {"degree_A_discrepancy_flagged", a_discrepancy},
                                         {"degrees", table}};
                       });
}

// ---------------------------------------------------------------------------
// 5. z-injectivity

inline CheckResult check_injectivity(const VerifyOptions& o) {
  return detail::timed("z_injectivity", "decode inverts build; differences confined to the z tiles", 0.0,
                       [&](CheckResult& r) {
                         RandomStream rng(o.seed, 0x696e6a);
                         double worst = 0;
                         for (int t = 0; t < 100; ++t) {
                           const auto p = detail::random_bounding(rng);
                           const auto z = detail::random_z(rng);
                           const auto back = decode_z(*build_wpz(p, z), 6);
                           for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(back[i] - z[i]));
                         }
                         const std::set<std::string> allowed{"CxC", "CxE", "ExC"};
                         std::uint64_t violations = 0, differing = 0;
                         for (int t = 0; t < 20; ++t) {
                           const auto p = detail::random_bounding(rng);
                           const auto w1 = build_wpz(p, detail::random_z(rng));
                           const auto w2 = build_wpz(p, detail::random_z(rng));
                           const auto d = diff_support(*w1, *w2, 100000, mix64(o.seed + static_cast<std::uint64_t>(t)));
                           differing += d.differing;
                           for (const auto& [tile, count] : d.tiles)
                             if (!allowed.count(tile)) violations += count;
                         }
                         r.passed = worst <= 1e-9 && violations == 0 && differing > 0;
                         r.detail = Json{{"max_decode_error", worst}, {"violations", violations}, {"differing_samples", differing}};
                       });
}

// ---------------------------------------------------------------------------
// 6. Series

inline CheckResult check_series(const VerifyOptions& o) {
  return detail::timed("series", "truncated density series against Monte Carlo; decay; strengthening", 0.0,
                       [&](CheckResult& r) {
                         const auto p = reference_bounding();
                         const std::vector<std::vector<double>> zs{reference_z(), reference_z_alt(),
                                                                   {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}};
                         SeriesOptions so;
                         so.k_max = 8;  // the whole reference sequence
                         so.samples = o.samples;
                         so.seed = o.seed;
                         bool agree = true, unity = true;
                         Json rows = Json::array();
                         double decay_c = 0;
                         bool decay_ok = true;
                         for (const char* name : {"K2", "K3", "P3"}) {
                           const auto h = SmallGraph::parse(name);
                           const auto s = assemble_series(h, p, so);
                           unity = unity && std::abs(s.weight_sum - 1.0) <= 1e-12;
                           for (std::size_t i = 0; i < zs.size(); ++i) {
                             const auto v = eval_series(s, zs[i], true);
                             DensityOptions mc;
                             mc.method = DensityMethod::MonteCarlo;
                             mc.samples = o.samples;
                             mc.seed = mix64(o.seed + i);
                             const auto e = tau(h, *build_wpz(p, zs[i]), mc);
                             const double tol = 3 * detail::hypot_sigma(v.sigma, e.sigma) + s.dropped_mass;
                             const bool ok = std::abs(v.value - e.value) <= tol;
                             agree = agree && ok;
                             rows.push_back(Json{{"graph", name}, {"z", i}, {"series", v.value}, {"series_sigma", v.sigma},
                                                 {"mc", e.value}, {"mc_sigma", e.sigma}, {"ok", ok}});
                           }
                           if (std::string(name) != "K2") {
                             const auto d = decay_check(s);
                             decay_c = std::max(decay_c, d.c);
                             decay_ok = decay_ok && d.passed;
                           }
                         }
                         SeriesOptions to;
                         to.k_max = 10;  // leaves room for strengthening at every k <= 8
                         to.samples = 20000;
                         to.min_samples = 16;
                         to.seed = o.seed;
                         const auto trend = strengthening_trend(SmallGraph::parse("P3"), p, 2, 8, 3, 2, to);
                         r.passed = agree && unity && decay_ok && decay_c < 1.0 && trend.non_increasing;
                         r.detail = Json{{"comparisons", rows},
                                         {"partition_of_unity", unity},
                                         {"decay_c_max", decay_c},
                                         {"decay_graphs", Json::array({"K3", "P3"})},
                                         {"strengthening_trend", trend.to_json()}};
                       });
}

// ---------------------------------------------------------------------------
// 7. Stabilization

inline CheckResult check_stabilization(const VerifyOptions& o) {
  return detail::timed("stabilization", "continuation residuals, Gronwall bound, excellence step, trivial system", 0.0,
                       [&](CheckResult& r) {
                         using namespace stab;
                         Json cont = Json::array();
                         bool cont_ok = true;
                         auto vec1 = [](double v) { return Vec::Constant(1, v); };
                         {
                           ImplicitProblem f;
                           f.f = [&](double x, const Vec& y) { return vec1(y(0) - x * x); };
                           ContinuationOptions co;
                           co.reference = [&](double x) { return vec1(x * x); };
                           co.tube = 1e-8;
                           const auto t = continue_implicit(f, 0.0, vec1(0.0), 0.0, 1.0, co);
                           const bool ok = t.x.size() >= 1000 && t.max_residual <= 1e-8 && t.max_reference_deviation <= 1e-8;
                           cont_ok = cont_ok && ok;
                           cont.push_back(Json{{"case", "y - x^2"}, {"ok", ok}, {"trace", t.to_json()}});
                         }
                         for (const auto& fam : synthetic_families()) {
                           ContinuationOptions co;
                           co.reference = fam.g;
                           co.tube = 1e-8;
                           const auto t = continue_implicit(fam.f, fam.x0, fam.g(fam.x0), fam.a, fam.b, co);
                           const bool ok = t.x.size() >= 1000 && t.max_residual <= 1e-8 && t.max_reference_deviation <= 1e-8;
                           cont_ok = cont_ok && ok;
                           cont.push_back(Json{{"case", fam.name}, {"ok", ok}, {"trace", t.to_json()}});
                         }
                         bool floor_hit = false;
                         {
                           ImplicitProblem f;
                           f.f = [&](double x, const Vec& y) { return vec1(y(0) * y(0) - x); };
                           try {
                             continue_implicit(f, 1.0, vec1(1.0), 0.0, 1.0);
                           } catch (const ToleranceError& e) {
                             floor_hit = std::string(e.what()).find("Jacobian floor") != std::string::npos;
                           }
                         }
                         Json gron = Json::array();
                         bool gron_ok = true;
                         for (const auto& fam : synthetic_families()) {
                           const auto g = gronwall_check(fam, 2000, o.seed);
                           gron_ok = gron_ok && g.holds;
                           Json j = g.to_json();
                           j.erase("continuation");
                           gron.push_back(j);
                         }
                         Targets lin{Target::from_json(Json::parse(R"({"terms":[{"c":1,"x":[1]},{"c":1,"x":[2]}]})"))};
                         const auto ex = make_excellent_step(trivial_system(1), lin, 1, 0.2, 0.5, {200, o.seed});
                         const auto& l1 = ex.system.level(1);
                         const bool ex_ok = ex.grown && ex.certified && l1.I == std::vector<int>{1} &&
                                            l1.J == std::vector<int>{1} && ex.max_variation <= 1e-6;
                         Targets any{Target::closed_form([](std::span<const double> a) { return std::sin(a[0]) * a[1]; })};
                         const auto triv = check_P1_P2(trivial_system(3), any, {100, o.seed});
                         bool vacuous = triv.passed;
                         for (const auto& lv : triv.levels) vacuous = vacuous && lv.vacuous;
                         r.passed = cont_ok && floor_hit && gron_ok && ex_ok && vacuous;
                         r.detail = Json{{"continuation", cont},
                                         {"jacobian_floor_detected", floor_hit},
                                         {"gronwall", gron},
                                         {"excellent_step",
                                          Json{{"ok", ex_ok}, {"certificate", ex.certificate}, {"I", l1.I}, {"J", l1.J},
                                               {"d", l1.d}, {"max_variation", ex.max_variation}}},
                                         {"trivial_system_vacuous", vacuous}};
                       });
}

// ---------------------------------------------------------------------------
// 8. Rendering oracle (the byte-identity half is checked by rerunning the report)

inline CheckResult check_render(const VerifyOptions&) {
  return detail::timed("render", "half-graphon render at 256 against the cell oracle", 0.0, [&](CheckResult& r) {
    HalfGraphon h;
    const int res = 256;
    const auto px = render(h, res);
    std::uint64_t mismatches = 0, interior = 0;
    for (int i = 0; i < res; ++i)
      for (int j = 0; j < res; ++j) {
        // Sub-sample (s, t) of cell (i, j) sits on or above the anti-diagonal
        // exactly when 3(i + j) + s + t + 1 >= 3 res.
        int hits = 0;
        for (int s = 0; s < 3; ++s)
          for (int t = 0; t < 3; ++t) hits += 3 * (i + j) + s + t + 1 >= 3 * res ? 1 : 0;
        const int expect = static_cast<int>(std::lround(255.0 * (1.0 - hits / 9.0)));
        if (px[static_cast<std::size_t>(i * res + j)] != expect) ++mismatches;
        // Cells clear of the diagonal equal the kernel at their centre.
        if (i + j + 1 < res || i + j >= res) {
          ++interior;
          const double c = h((j + 0.5) / res, (i + 0.5) / res);
          if (px[static_cast<std::size_t>(i * res + j)] != static_cast<int>(std::lround(255.0 * (1.0 - c)))) ++mismatches;
        }
      }
    r.passed = mismatches == 0;
    r.detail = Json{{"resolution", res}, {"cells", res * res}, {"interior_cells", interior}, {"mismatches", mismatches}};
  });
}

using CheckFn = CheckResult (*)(const VerifyOptions&);

struct NamedCheck {
  int criterion;
  CheckFn fn;
};

inline const std::vector<NamedCheck>& all_checks() {
  static const std::vector<NamedCheck> c{{1, check_rooted},        {2, check_multisets},   {3, check_densities},
                                         {4, check_wpz_structure}, {5, check_injectivity}, {6, check_series},
                                         {7, check_stabilization}, {8, check_render}};
  return c;
}

struct Report {
  std::vector<CheckResult> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  Json to_json() const {
    Json arr = Json::array();
    for (const auto& c : checks) arr.push_back(c.to_json());
    return Json{{"passed", passed()}, {"checks", arr}};
  }
};

inline Report run_all(const VerifyOptions& o, const std::function<void(const CheckResult&)>& progress = {}) {
  Report rep;
  for (const auto& c : all_checks()) {
    rep.checks.push_back(c.fn(o));
    if (progress) progress(rep.checks.back());
  }
  return rep;
}

}  // namespace graphonforge::verify
