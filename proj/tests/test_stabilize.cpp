#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "graphonforge/stabilize.hpp"

using namespace graphonforge;
using namespace graphonforge::stab;

namespace {

Vec vec1(double v) { return Vec::Constant(1, v); }

// t_1 = a_{1,1} - a_{1,2}^2 in closed form.
Targets parabola_target() {
  return {Target::closed_form([](std::span<const double> a) { return a[0] - a[1] * a[1]; })};
}

StabilizingSystem one_level(std::function<std::vector<double>(std::span<const double>)> w, std::vector<double> b,
                            int d = 2) {
  Level l;
  l.U = {0.1, 0.9};
  l.V = BoxUnion(0).times(l.U);
  l.I = {1};
  l.J = {1};
  l.d = d;
  l.b = std::move(b);
  l.w = Stabilizer::explicit_fn(std::move(w));
  return StabilizingSystem({l});
}

}  // namespace

TEST(Blocks, FlatIndexing) {
  EXPECT_EQ(flat_index(1, 1), 1);
  EXPECT_EQ(flat_index(1, 2), 2);
  EXPECT_EQ(flat_index(2, 1), 3);
  EXPECT_EQ(flat_index(3, 4), 9);
  EXPECT_EQ(flat_dim(3), 9);
}

TEST(BoxUnion, ContainsSliceSampleIntersect) {
  BoxUnion u(2, {Box{{0, 0.5}, {0, 0.2}}, Box{{0.25, 1}, {0.1, 0.6}}});
  const std::vector<double> in{0.3, 0.15}, out{0.9, 0.8};
  EXPECT_TRUE(u.contains(in));
  EXPECT_FALSE(u.contains(out));
  const auto s = u.slice(std::vector<double>{0.3});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].lo, 0.0);
  EXPECT_DOUBLE_EQ(s[0].hi, 0.6);
  RandomStream r(1, 0);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(u.contains(u.sample(r)));
  const auto c = u.intersect(Box{{0.6, 1}, {0, 1}});
  EXPECT_EQ(c.boxes().size(), 1u);
  EXPECT_THROW(BoxUnion(2, {Box{{0, 1}}}), ValidationError);
  EXPECT_NEAR(total_length({{0, 0.3}, {0.2, 0.5}, {0.7, 0.8}}), 0.6, 1e-15);
}

TEST(Jacobian, ClosedFormAndPolynomialAgree) {
  // t_1 = a11 - a12^2, t_2 = a21 * a22 + a23 as a polynomial.
  MonomialPolynomial t2;
  t2.set(rank(Multiset(std::vector<int>{3, 4})), 1.0);
  t2.set(rank(Multiset(std::vector<int>{5})), 1.0);
  Targets t = parabola_target();
  t.push_back(Target::polynomial(t2));
  const std::vector<double> a{0.3, 0.4, 0.2, 0.7, 0.1};
  const Mat m1 = jacobian_Mk(t, 1, a);
  EXPECT_NEAR(m1(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(m1(0, 1), -0.8, 1e-8);
  const Mat m2 = jacobian_Mk(t, 2, a);
  ASSERT_EQ(m2.rows(), 2);
  ASSERT_EQ(m2.cols(), 3);
  EXPECT_NEAR(m2.row(0).norm(), 0.0, 1e-8);  // t_1 ignores block 2
  EXPECT_DOUBLE_EQ(m2(1, 0), 0.7);
  EXPECT_DOUBLE_EQ(m2(1, 1), 0.2);
  EXPECT_DOUBLE_EQ(m2(1, 2), 1.0);
  // A missing target gives a zero row.
  const Mat m3 = jacobian_Mk(Targets{t[0]}, 2, a);
  EXPECT_EQ(m3.row(1).norm(), 0.0);
  EXPECT_THROW(jacobian_Mk(t, 3, a), ValidationError);
}

TEST(Targets, TermsJsonMatchesClosedForm) {
  const auto t = Target::from_json(Json::parse(R"({"terms":[{"c":1,"x":[1]},{"c":-1,"x":[2,2]}]})"));
  const auto ref = parabola_target()[0];
  RandomStream r(2, 0);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> a{r.uniform(), r.uniform()};
    EXPECT_NEAR(t.value(a), ref.value(a), 1e-15);
    EXPECT_NEAR(t.partial(a, 2), ref.partial(a, 2), 1e-8);
  }
  EXPECT_THROW(Target::from_json(Json::parse(R"({"terms":[{"x":[1]}]})")), ValidationError);
  EXPECT_THROW(Target::from_json(Json::parse(R"({"terms":[{"c":1,"x":[0]}]})")), ValidationError);
  EXPECT_THROW(Target::from_json(Json::parse(R"({"foo":1})")), ValidationError);
}

TEST(P1P2, SquareStabilizerPasses) {
  const auto s = one_level([](std::span<const double> x) { return std::vector<double>{x[0] * x[0], x[0]}; },
                           {0.25, 0.5});
  const auto rep = check_P1_P2(s, parabola_target());
  EXPECT_TRUE(rep.passed);
  ASSERT_EQ(rep.levels.size(), 1u);
  EXPECT_NEAR(rep.levels[0].min_abs_det, 1.0, 1e-6);
  EXPECT_EQ(rep.levels[0].max_p2_deviation, 0.0);
  EXPECT_EQ(rep.levels[0].max_invariant_deviation, 0.0);
}

TEST(P1P2, BrokenStabilizerFails) {
  const auto s = one_level([](std::span<const double> x) { return std::vector<double>{x[0], x[0]}; }, {0.5, 0.5});
  const auto rep = check_P1_P2(s, parabola_target());
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.levels[0].max_p2_deviation, 1e-3);
}

TEST(P1P2, TrivialLevelsAreVacuous) {
  const auto rep = check_P1_P2(trivial_system(3), parabola_target());
  EXPECT_TRUE(rep.passed);
  for (const auto& l : rep.levels) EXPECT_TRUE(l.vacuous);
}

TEST(P1P2, ImplicitStabilizerMatchesExplicit) {
  Level l;
  l.U = {0.1, 0.9};
  l.V = BoxUnion(0).times(l.U);
  l.I = {1};
  l.J = {1};
  l.d = 2;
  l.b = {0.25, 0.5};
  l.w = Stabilizer::implicit();
  const StabilizingSystem s({l});
  const auto t = parabola_target();
  for (double x : {0.1, 0.37, 0.9}) {
    const auto a = s.point(t, std::vector<double>{x});
    EXPECT_NEAR(a[0], x * x, 1e-10);
    EXPECT_DOUBLE_EQ(a[1], x);
  }
  const auto rep = check_P1_P2(s, t, {50, 0});
  EXPECT_TRUE(rep.passed);
}

TEST(System, JsonRoundTripAndValidation) {
  const auto j = Json::parse(R"({
    "c": 1.0,
    "levels": [
      {"U": [0.1, 0.9], "I": [1], "J": [1], "d": 2, "b": [0.25, 0.5],
       "stabilizer": {"kind": "polynomial", "components": {"1": {"terms": [{"c": 1, "x": [1, 1]}]},
                                                           "2": {"terms": [{"c": 1, "x": [1]}]}}}},
      {"U": [0.2, 0.8], "b": [0.5, 0.5, 0.5]}
    ],
    "targets": [{"terms": [{"c": 1, "x": [1]}, {"c": -1, "x": [2, 2]}]}]
  })");
  const auto f = load_system(j);
  EXPECT_EQ(f.system.depth(), 2);
  EXPECT_TRUE(check_P1_P2(f.system, f.targets).passed);
  const auto again = load_system(system_file_json(f.system, f.targets));
  EXPECT_EQ(system_file_json(again.system, again.targets).dump(), system_file_json(f.system, f.targets).dump());
  auto bad = j;
  bad["levels"][0]["d"] = 1;  // d inside J
  EXPECT_THROW(load_system(bad), ValidationError);
  bad = j;
  bad["levels"][0]["b"] = Json::array({0.25, 0.95});  // b_d outside U
  EXPECT_THROW(load_system(bad), ValidationError);
  bad = j;
  bad["levels"][1]["b"] = Json::array({0.5, 0.5});
  EXPECT_THROW(load_system(bad), ValidationError);
  bad = j;
  bad["levels"][0]["I"] = Json::array();
  EXPECT_THROW(load_system(bad), ValidationError);
}

TEST(System, StrengthProfileOfFullBoxesIsOne) {
  for (double v : strength_profile(trivial_system(3))) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Continuation, TracesCircleAgainstClosedForm) {
  ImplicitProblem p;
  p.f = [](double x, const Vec& y) { return vec1(x * x + y(0) * y(0) - 1.0); };
  ContinuationOptions o;
  o.points = 201;
  o.tube = 1e-6;
  o.reference = [](double x) { return vec1(std::sqrt(1 - x * x)); };
  const auto t = continue_implicit(p, 0.0, vec1(1.0), -0.8, 0.8, o);
  EXPECT_LE(t.max_residual, 1e-12);
  EXPECT_LE(t.max_reference_deviation, 1e-12);
  EXPECT_EQ(t.x.size(), 201u);
  EXPECT_GT(t.min_abs_det, 1.0);
}

TEST(Continuation, StopsAtJacobianFloor) {
  ImplicitProblem p;
  p.f = [](double x, const Vec& y) { return vec1(y(0) * y(0) - x); };
  p.jac_y = [](double, const Vec& y) { return Mat::Constant(1, 1, 2 * y(0)); };
  try {
    continue_implicit(p, 1.0, vec1(1.0), 0.0, 1.0);
    FAIL() << "expected a tolerance failure";
  } catch (const ToleranceError& e) {
    EXPECT_NE(std::string(e.what()).find("Jacobian floor"), std::string::npos);
  }
  EXPECT_THROW(continue_implicit(p, 1.0, vec1(0.9), 0.0, 1.0), ValidationError);
}

TEST(Continuation, LeavingTheTubeFails) {
  ImplicitProblem p;
  p.f = [](double x, const Vec& y) { return vec1(y(0) - 2 * x); };
  ContinuationOptions o;
  o.reference = [](double x) { return vec1(x); };
  o.tube = 0.05;
  EXPECT_THROW(continue_implicit(p, 0.0, vec1(0.0), 0.0, 1.0, o), ToleranceError);
}

TEST(Gronwall, BoundHoldsOnSyntheticFamilies) {
  for (const auto& fam : synthetic_families()) {
    const auto rep = gronwall_check(fam);
    EXPECT_TRUE(rep.holds) << fam.name << " measured " << rep.measured << " bound " << rep.bound;
    EXPECT_GT(rep.measured, 0.0) << fam.name;
    EXPECT_LE(rep.trace.max_residual, 1e-10) << fam.name;
  }
}

TEST(Gronwall, CubicClosedFormSolvesEquation) {
  const auto fams = synthetic_families();
  const auto& cubic = fams[1];
  for (double x : {0.0, 0.2, 0.5, 1.0}) {
    const double y = cubic.g(x)(0);
    EXPECT_NEAR(y * y * y + y - x, 0.0, 1e-14);
  }
}

TEST(ShrinkZeroSet, OneDimensionalGap) {
  const std::vector<stab::Interval> U{{0, 1}};
  const std::vector<BoxUnion> V{BoxUnion(1, {Box{{0, 1}}})};
  auto T = [](std::span<const double> x) { return x[0] - 0.5; };
  const auto r = shrink_zero_set(U, V, T, 1.0, 0.8, {20, 500, 1});
  EXPECT_GT(r.min_abs_T, 0.0);
  EXPECT_GE(r.retention, 0.9 - 1e-12);
  const std::vector<double> mid{0.5};
  EXPECT_FALSE(r.V[0].contains(mid));
  // The removed gap is at most 0.1 wide.
  EXPECT_NEAR(total_length({r.V[0].boxes()[0][0], r.V[0].boxes().back()[0]}), 0.9, 1e-12);
}

TEST(ShrinkZeroSet, TwoDimensionalDiagonal) {
  const std::vector<stab::Interval> U{{0, 1}, {0, 1}};
  const std::vector<BoxUnion> V{BoxUnion(1, {Box{{0, 1}}}), BoxUnion(2, {Box{{0, 1}, {0, 1}}})};
  auto T = [](std::span<const double> x) { return x[0] - x[1]; };
  const auto r = shrink_zero_set(U, V, T, 1.0, 0.5, {32, 2000, 2});
  EXPECT_GT(r.min_abs_T, 0.0);
  EXPECT_GE(r.retention, 0.5);
  EXPECT_GT(r.removed_cells, 0u);
}

TEST(ShrinkZeroSet, IdenticallyZeroIsRejected) {
  const std::vector<stab::Interval> U{{0, 1}};
  const std::vector<BoxUnion> V{BoxUnion(1, {Box{{0, 1}}})};
  auto T = [](std::span<const double>) { return 0.0; };
  EXPECT_THROW(shrink_zero_set(U, V, T, 1.0, 0.8), ToleranceError);
  EXPECT_THROW(shrink_zero_set(U, V, T, 0.5, 0.8), ValidationError);
}

TEST(MakeExcellent, LinearTargetGrowsIndexSets) {
  // t_1 = a11 + a12 with nothing stabilized yet.
  Targets t{Target::from_json(Json::parse(R"({"terms":[{"c":1,"x":[1]},{"c":1,"x":[2]}]})"))};
  const auto s = trivial_system(1);
  const auto r = make_excellent_step(s, t, 1, 0.2, 0.5);
  EXPECT_TRUE(r.grown);
  EXPECT_TRUE(r.certified);
  const auto& l = r.system.level(1);
  EXPECT_EQ(l.I, std::vector<int>{1});
  EXPECT_EQ(l.J, std::vector<int>{1});
  EXPECT_EQ(l.d, 2);
  EXPECT_TRUE(r.check.passed);
  EXPECT_LE(r.max_variation, 1e-6);
  // Already excellent: a second step changes nothing.
  const auto again = make_excellent_step(r.system, t, 1, 0.2, 0.5);
  EXPECT_FALSE(again.grown);
  EXPECT_TRUE(again.certified);
}

TEST(MakeExcellent, ZeroRankIsTriviallyExcellent) {
  Targets t{Target::from_json(Json::parse(R"({"constant":0.3})"))};
  const auto r = make_excellent_step(trivial_system(2), t, 2, 0.1, 0.5);
  EXPECT_TRUE(r.certified);
  EXPECT_FALSE(r.grown);
  EXPECT_EQ(r.certificate, "0-excellent trivially");
}

TEST(MakeExcellent, SecondLevelShrinksLowerSets) {
  // t_2 = a21 (a11 - 1/2): the new minor vanishes on the prefix a11 = 1/2.
  Targets t{Target::from_json(Json::parse(R"({"constant":0.0})")),
            Target::from_json(Json::parse(R"({"terms":[{"c":1,"x":[1,3]},{"c":-0.5,"x":[3]}]})"))};
  const auto r = make_excellent_step(trivial_system(2), t, 2, 0.2, 0.5);
  EXPECT_TRUE(r.certified);
  EXPECT_TRUE(r.check.passed);
  EXPECT_LE(r.max_variation, 1e-6);
  const auto& l = r.system.level(2);
  EXPECT_EQ(l.I, std::vector<int>{2});
  EXPECT_EQ(l.J, std::vector<int>{1});
  EXPECT_EQ(l.d, 2);
  EXPECT_FALSE(r.system.level(1).V.contains(std::vector<double>{0.5}));
  EXPECT_GE(strength_profile(r.system)[0], 0.99);
}

TEST(MakeExcellent, RejectsBadArguments) {
  Targets t = parabola_target();
  EXPECT_THROW(make_excellent_step(trivial_system(1), t, 2, 0.1, 0.5), ValidationError);
  EXPECT_THROW(make_excellent_step(trivial_system(1), t, 1, 0.0, 0.5), ValidationError);
}
