#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "graphonforge/graphon.hpp"

using namespace graphonforge;

namespace {

std::shared_ptr<StepGraphon> two_block() {
  return std::make_shared<StepGraphon>(std::vector<double>{0.25, 0.75},
                                       std::vector<std::vector<double>>{{0.9, 0.2}, {0.2, 0.4}});
}

struct ThreadEnv {
  explicit ThreadEnv(const char* v) { setenv("GRAPHONFORGE_THREADS", v, 1); }
  ~ThreadEnv() { unsetenv("GRAPHONFORGE_THREADS"); }
};

}  // namespace

TEST(Coordinates, IntervalContainsPoint) {
  RandomStream r(3, 0);
  for (int i = 0; i < 100000; ++i) {
    const double x = r.uniform();
    const int k = coord(x);
    ASSERT_GE(k, 1);
    ASSERT_GE(x, coord_low(k));
    ASSERT_LT(x, coord_low(k) + coord_width(k));
  }
  EXPECT_EQ(coord(0.0), 1);
  EXPECT_EQ(coord(0.5), 2);
  EXPECT_EQ(coord(0.75), 3);
  EXPECT_EQ(coord(0.7499999), 2);
  EXPECT_EQ(coord(1.25), 1);
}

TEST(StepGraphon, RejectsInvalidSpecs) {
  using V = std::vector<std::vector<double>>;
  EXPECT_THROW(StepGraphon({0.5, 0.4}, V{{0, 0}, {0, 0}}), ValidationError);
  EXPECT_THROW(StepGraphon({0.5, 0.5}, V{{0, 0.1}, {0.2, 0}}), ValidationError);
  EXPECT_THROW(StepGraphon({0.5, 0.5}, V{{0, 1.5}, {1.5, 0}}), ValidationError);
  EXPECT_THROW(StepGraphon({1.0}, V{{0, 1}}), ValidationError);
  EXPECT_THROW(StepGraphon::from_json(Json{{"sizes", "x"}}), ValidationError);
}

TEST(StepGraphon, EvaluatesBlocksAndRoundTripsJson) {
  auto w = two_block();
  EXPECT_DOUBLE_EQ((*w)(0.1, 0.2), 0.9);
  EXPECT_DOUBLE_EQ((*w)(0.1, 0.5), 0.2);
  EXPECT_DOUBLE_EQ((*w)(0.25, 0.999), 0.4);
  auto back = StepGraphon::from_json(w->to_json());
  EXPECT_EQ(back->to_json(), w->to_json());
}

TEST(RowIntegrals, ExactMatchesBlockOracle) {
  auto w = two_block();
  // Degree of a point in part 0: 0.25*0.9 + 0.75*0.2.
  EXPECT_NEAR(degree(*w, 0.1).value, 0.25 * 0.9 + 0.75 * 0.2, 1e-15);
  EXPECT_NEAR(degree(*w, 0.6).value, 0.25 * 0.2 + 0.75 * 0.4, 1e-15);
  EXPECT_NEAR(row_integral(*w, 0.1, 0.2, 0.3).value, 0.05 * 0.9 + 0.05 * 0.2, 1e-15);
  HalfGraphon h;
  for (double x : {0.0, 0.13, 0.5, 0.77}) EXPECT_NEAR(degree(h, x).value, x, 1e-15);
}

TEST(RowIntegrals, QuadratureMethodsAgree) {
  HalfGraphon h;
  QuadratureSpec mid{QuadratureSpec::Method::Midpoint};
  QuadratureSpec mc{QuadratureSpec::Method::MonteCarlo};
  mc.samples = 200000;
  for (double x : {0.1, 0.4, 0.9}) {
    const double exact = degree(h, x).value;
    EXPECT_NEAR(degree(h, x, mid).value, exact, 1e-12);
    const auto e = degree(h, x, mc);
    EXPECT_LE(std::abs(e.value - exact), 4 * e.sigma + 1e-12);
  }
  FunctionGraphon f([](double x, double y) { return x * y; }, "xy");
  const auto u = degree(f, 0.5);
  EXPECT_LE(std::abs(u.value - 0.25), 4 * u.sigma + 1e-12);
  const auto rel = relative_degree(*two_block(), 0.1, IntervalSet{{0.25, 1.0}});
  EXPECT_NEAR(rel.value, 0.2, 1e-15);
}

TEST(Sampling, EdgeDensityMatchesKernelAndIsThreadInvariant) {
  auto w = two_block();
  std::string text1, text4;
  {
    ThreadEnv t("1");
    text1 = sample_w_random_graph(*w, 400, 7).graph.to_text();
  }
  {
    ThreadEnv t("4");
    text4 = sample_w_random_graph(*w, 400, 7).graph.to_text();
  }
  EXPECT_EQ(text1, text4);
  const auto g = sample_w_random_graph(*w, 2000, 9);
  const double pairs = 2000.0 * 1999.0 / 2.0;
  const double t = 0.25 * 0.25 * 0.9 + 2 * 0.25 * 0.75 * 0.2 + 0.75 * 0.75 * 0.4;
  const double density = static_cast<double>(g.graph.edges.size()) / pairs;
  // Dominated by point-placement variance: sd well below 0.01 at n = 2000.
  EXPECT_NEAR(density, t, 0.02);
}

TEST(EdgeList, TextRoundTripAndValidation) {
  EdgeListGraph g;
  g.n = 4;
  g.edges = {{0, 1}, {0, 3}, {2, 3}};
  const std::string text = g.to_text();
  EXPECT_EQ(text.substr(0, 4), "4 3\n");
  const auto back = EdgeListGraph::from_text(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_THROW(EdgeListGraph::from_text("3 1\n0 5\n"), ValidationError);
  EXPECT_THROW(EdgeListGraph::from_text("3 2\n0 1\n"), ValidationError);
  EXPECT_THROW(EdgeListGraph::from_text("3 2\n0 1\n1 0\n"), ValidationError);
}

TEST(Distances, StepL1IsExact) {
  auto a = two_block();
  auto b = StepGraphon::constant(0.5);
  const double oracle = 0.0625 * 0.4 + 2 * 0.1875 * 0.3 + 0.5625 * 0.1;
  EXPECT_NEAR(l1_distance(*a, *b).value, oracle, 1e-15);
  HalfGraphon h;
  EstimatorSpec spec;
  spec.samples = 200000;
  const auto e = l1_distance(h, *b, spec);
  EXPECT_LE(std::abs(e.value - 0.5), 4 * e.sigma + 1e-12);
}

TEST(Entropy, StepExactAndGridConverges) {
  auto c = StepGraphon::constant(0.5);
  EXPECT_NEAR(entropy(*c).value, std::log(0.5), 1e-15);
  FunctionGraphon f([](double x, double y) { return 0.25 + 0.5 * x * y; }, "smooth");
  EstimatorSpec spec;
  spec.resolution = 256;
  const auto e = entropy(f, spec);
  // Independent oracle: composite Simpson on a 200 x 200 grid.
  const int n = 200;
  double s = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double wi = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
      const double wj = (j == 0 || j == n) ? 1 : (j % 2 ? 4 : 2);
      s += wi * wj * entropy_integrand(0.25 + 0.5 * (double(i) / n) * (double(j) / n));
    }
  s /= 9.0 * n * n;
  EXPECT_NEAR(e.value, s, 1e-5);
  EXPECT_LT(e.sigma, 1e-4);
}

TEST(Render, HalfGraphonMatchesSupersampleOracle) {
  HalfGraphon h;
  const int res = 64;
  const auto px = render(h, res);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      int hits = 0;
      for (int s = 0; s < 3; ++s)
        for (int t = 0; t < 3; ++t) {
          const double y = (3.0 * i + s + 0.5) / (3.0 * res), x = (3.0 * j + t + 0.5) / (3.0 * res);
          hits += (x + y >= 1.0) ? 1 : 0;
        }
      const int expect = static_cast<int>(std::lround(255.0 * (1.0 - hits / 9.0)));
      ASSERT_EQ(px[static_cast<std::size_t>(i * res + j)], expect) << i << "," << j;
    }
  const std::string pgm = encode_pgm(px, res);
  EXPECT_EQ(pgm.substr(0, 13), "P5\n64 64\n255\n");
  EXPECT_EQ(pgm.size(), 13u + 64u * 64u);
}

TEST(Combine, PointwiseOperation) {
  auto a = two_block();
  auto b = StepGraphon::constant(0.5);
  auto c = combine(a, b, [](double u, double v) { return 0.5 * (u + v); });
  EXPECT_DOUBLE_EQ((*c)(0.1, 0.1), 0.7);
}
