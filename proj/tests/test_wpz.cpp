#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "graphonforge/fixtures.hpp"
#include "graphonforge/wpz.hpp"

using namespace graphonforge;
namespace P = graphonforge::wpz;

namespace {

const WpzGraphon& reference() {
  static const auto w = build_wpz(reference_bounding(), reference_z());
  return *w;
}

// Relative point in part C: given third, coordinate k and position inside the cell.
double c_point(int third, int k, double frac_in_cell) {
  return (third + coord_low(k) + coord_width(k) * frac_in_cell) / 3.0;
}

// Points biased towards the shallow coordinate cells where the tiles carry structure.
double structured_point(RandomStream& r) {
  const int third = static_cast<int>(r.below(3));
  const int k = 1 + static_cast<int>(r.below(8));
  return c_point(third, k, r.uniform());
}

}  // namespace

TEST(WpzLayout, PartsTileTheUnitInterval) {
  EXPECT_DOUBLE_EQ(P::part_start(P::Q), 12.0 / 25);
  EXPECT_DOUBLE_EQ(P::part_end(P::Q), 24.0 / 25);
  EXPECT_EQ(P::part_of(0.0), P::A);
  EXPECT_EQ(P::part_of(0.999999), P::R);
  EXPECT_EQ(P::part_of(0.5), P::Q);
  RandomStream r(1, 0);
  for (int p = 0; p < P::kParts; ++p)
    for (int t = 0; t < 1000; ++t) {
      const double rel = r.uniform();
      const double g = P::embed(p, rel);
      ASSERT_EQ(P::part_of(g), p);
      ASSERT_NEAR(P::relative(p, g), rel, 1e-12);
    }
  for (int p = 1; p < P::kParts; ++p) EXPECT_EQ(P::part_of(P::part_start(p)), p);
}

TEST(WpzGraphon, SymmetricAndInRange) {
  const auto& w = reference();
  RandomStream r(2, 0);
  for (int t = 0; t < 200000; ++t) {
    const int px = static_cast<int>(r.below(P::kParts)), py = static_cast<int>(r.below(P::kParts));
    const double x = P::embed(px, t % 2 ? structured_point(r) : r.uniform());
    const double y = P::embed(py, t % 2 ? structured_point(r) : r.uniform());
    const double v = w(x, y);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_EQ(v, w(y, x)) << P::tile_name(px, py);
  }
}

TEST(WpzGraphon, TileValuesAtHandPickedPoints) {
  const auto& w = reference();
  const auto z = reference_z();
  // M_2 = {1}: the C x C cells of coordinate 2 carry z_1.
  EXPECT_DOUBLE_EQ(w.tile(P::C, P::C, c_point(0, 2, 0.2), c_point(0, 2, 0.9)), z[0]);
  EXPECT_DOUBLE_EQ(w.tile(P::C, P::C, c_point(1, 2, 0.2), c_point(1, 2, 0.9)), z[0]);
  EXPECT_DOUBLE_EQ(w.tile(P::C, P::C, c_point(0, 2, 0.2), c_point(1, 2, 0.9)), 1 - z[0]);
  // M_6 = {1,2}.
  EXPECT_DOUBLE_EQ(w.tile(P::C, P::C, c_point(0, 6, 0.5), c_point(0, 6, 0.5)), z[0] * z[1]);
  EXPECT_EQ(w.tile(P::C, P::C, c_point(0, 2, 0.5), c_point(0, 3, 0.5)), 0.0);
  EXPECT_EQ(w.tile(P::C, P::C, c_point(2, 2, 0.5), c_point(2, 2, 0.5)), 0.0);
  // C x E with p_2 = 0.01 + 0.005 z_1.
  const double p2 = 0.01 + 0.005 * z[0];
  EXPECT_EQ(w.tile(P::C, P::E, c_point(0, 2, 0.5), c_point(0, 2, p2 * 0.99)), 1.0);
  EXPECT_EQ(w.tile(P::C, P::E, c_point(0, 2, 0.5), c_point(0, 2, p2 * 1.01)), 0.0);
  EXPECT_EQ(w.tile(P::C, P::E, c_point(1, 2, 0.5), c_point(0, 2, p2 * 1.01)), 1.0);
  EXPECT_EQ(w.tile(P::C, P::E, c_point(0, 2, 0.5), c_point(1, 2, (1 - p2) * 0.99)), 1.0);
  EXPECT_EQ(w.tile(P::C, P::E, c_point(1, 2, 0.5), c_point(1, 2, (1 - p2) * 0.99)), 0.0);
  EXPECT_EQ(w.tile(P::C, P::E, c_point(2, 2, 0.5), c_point(0, 2, 0.0)), 0.0);
  // D_G x E: the E cell below u_k (third 1) or l_k (third 2).
  EXPECT_EQ(w.tile(P::DG, P::E, c_point(1, 2, 0.5), c_point(0, 2, 0.019)), 1.0);
  EXPECT_EQ(w.tile(P::DG, P::E, c_point(1, 2, 0.5), c_point(0, 2, 0.021)), 0.0);
  EXPECT_EQ(w.tile(P::DG, P::E, c_point(2, 2, 0.5), c_point(0, 2, 0.004)), 1.0);
  EXPECT_EQ(w.tile(P::DG, P::E, c_point(2, 2, 0.5), c_point(0, 2, 0.006)), 0.0);
  // Half tiles and constants.
  EXPECT_EQ(w.tile(P::A, P::F, 0.3, 0.71), 1.0);
  EXPECT_EQ(w.tile(P::A, P::F, 0.3, 0.69), 0.0);
  EXPECT_EQ(w.tile(P::C, P::F, 0.9, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(w.tile(P::E, P::R, 0.4, 0.2), 11.0 / 25);
  EXPECT_EQ(w.tile(P::Q, P::R, 0.4, 0.2), 1.0);
  EXPECT_EQ(w.tile(P::R, P::R, 0.4, 0.2), 0.0);
  EXPECT_EQ(w.tile(P::Q, P::Q, 0.4, 0.2), 1.0);
  // Auxiliary kernel on D_G x D_G: third 2 block carries l_k.
  EXPECT_DOUBLE_EQ(w.tile(P::DG, P::DG, c_point(2, 5, 0.1), c_point(2, 5, 0.8)), 0.01);
  EXPECT_DOUBLE_EQ(w.tile(P::DG, P::DG, c_point(1, 2, 0.1), c_point(1, 2, 0.8)), 1 - 0.02);
}

TEST(WpzGraphon, AuxiliaryKernelSuccessorRule) {
  // M_6 = {1,2}: predecessor {2} = M_3 and singleton of the minimum {1} = M_2.
  EXPECT_TRUE(WFKernel::successor_rule(3, 6));
  EXPECT_TRUE(WFKernel::successor_rule(2, 6));
  EXPECT_FALSE(WFKernel::successor_rule(4, 6));
  const auto& w = reference();
  const double y = c_point(0, 6, 0.5);
  ASSERT_GE(y, 1.0 / 6.0);
  EXPECT_EQ(w.wf()(c_point(1, 3, 0.5), y), 1.0);
  EXPECT_EQ(w.wf()(c_point(1, 4, 0.5), y), 0.0);
  EXPECT_EQ(w.wf()(y, c_point(1, 2, 0.5)), 1.0);
}

TEST(WpzGraphon, RowTablesMatchDirectSums) {
  const auto& w = reference();
  RandomStream r(3, 0);
  for (int p = 0; p < P::kInner; ++p)
    for (int t = 0; t < 300; ++t) {
      const double x = t % 2 ? structured_point(r) : r.uniform();
      double direct = 0;
      for (int q = 0; q < P::kInner; ++q) direct += w.full_tile_row(p, q, x);
      ASSERT_NEAR(w.row_sum(p, x), direct, 1e-12) << P::part_name(p) << " x=" << x;
    }
}

TEST(WpzGraphon, DegreesAreConstantOnEachPart) {
  const auto& w = reference();
  QuadratureSpec mid{QuadratureSpec::Method::Midpoint};
  RandomStream r(4, 0);
  double q_degree = -1;
  for (int p = 0; p < P::kParts; ++p)
    for (int t = 0; t < 60; ++t) {
      const double x = P::embed(p, t % 2 ? structured_point(r) : r.uniform());
      const double exact = degree(w, x).value;
      // Independent route: midpoint rule on the breakpoint pieces.
      const double numeric = degree(w, x, mid).value;
      ASSERT_NEAR(exact, numeric, 1e-12) << P::part_name(p);
      if (p < P::kInner || p == P::R) {
        ASSERT_NEAR(exact, construction_degree(p), 1e-12) << P::part_name(p);
      } else {
        if (q_degree < 0) q_degree = exact;
        ASSERT_NEAR(exact, q_degree, 1e-12);
      }
    }
  EXPECT_GT(q_degree, 1300.0 / 2500);
  EXPECT_NEAR(construction_degree(P::A), 1204.0 / 2500, 1e-15);
  EXPECT_NEAR(construction_degree(P::R), 1512.0 / 2500, 1e-15);
  // Degrees are pairwise distinct, so the parts are recoverable from degrees.
  std::set<double> seen;
  for (int p = 0; p < P::kParts; ++p)
    if (p != P::Q) seen.insert(construction_degree(p));
  EXPECT_EQ(seen.size(), 13u);
}

TEST(WpzGraphon, DegreeProfileSpreadIsZero) {
  const auto prof = part_degree_profile(reference(), 50, 1);
  ASSERT_EQ(prof.size(), static_cast<std::size_t>(P::kParts));
  for (const auto& d : prof) EXPECT_LT(d.spread(), 1e-12) << d.name;
}

TEST(WpzGraphon, DecodeRecoversZ) {
  const auto& w = reference();
  const auto z = decode_z(w, 6);
  const auto ref = reference_z();
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_DOUBLE_EQ(z[i], ref[i]);
  auto half = StepGraphon::constant(0.5);
  EXPECT_THROW(decode_z(*half, 6), ValidationError);
}

TEST(WpzGraphon, DifferentZOnlyChangesZTiles) {
  const auto w2 = build_wpz(reference_bounding(), reference_z_alt());
  const auto rep = diff_support(reference(), *w2, 400000, 5);
  EXPECT_GT(rep.differing, 0u);
  const std::set<std::string> allowed{"CxC", "CxE", "ExC"};
  for (const auto& [tile, count] : rep.tiles) EXPECT_TRUE(allowed.count(tile)) << tile << " " << count;
  EXPECT_TRUE(rep.tiles.count("CxC"));
}

TEST(WpzGraphon, TruncationIsReported) {
  const auto& w = reference();
  EXPECT_EQ(w.truncation_depth(), 30);
  EXPECT_NO_THROW(w.tile(P::C, P::C, c_point(0, 30, 0.5), c_point(0, 30, 0.5)));
  EXPECT_THROW(w.tile(P::C, P::C, c_point(0, 31, 0.5), c_point(0, 31, 0.5)), TruncationError);
  EXPECT_EQ(WpzGraphon::reachable_coord(1.0 / 1000), 3);
}

TEST(WpzGraphon, RejectsInvalidInputs) {
  EXPECT_THROW(build_wpz(reference_bounding(), {0.1, 0.2}), ValidationError);
  EXPECT_THROW(build_wpz(reference_bounding(), {0.1, 0.2, 0.3, 0.4, 0.5, 1.5}), ValidationError);
  auto bad = reference_bounding();
  bad.set_triple(4, {{}, 0.5, 0.2});
  EXPECT_THROW(build_wpz(bad, reference_z()), ValidationError);
}

TEST(WpzGraphon, JsonRoundTripAndCustomDBlock) {
  const auto& w = reference();
  const auto back = wpz_from_json(w.to_json());
  RandomStream r(6, 0);
  for (int t = 0; t < 5000; ++t) {
    const double x = r.uniform(), y = r.uniform();
    ASSERT_EQ(w(x, y), (*back)(x, y));
  }
  // Inline step kernel for the D block: 7 equal parts, diagonal 0.9.
  std::vector<std::vector<double>> v(7, std::vector<double>(7, 0.1));
  for (int i = 0; i < 7; ++i) v[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0.9;
  Json spec = w.to_json();
  spec["d_block"] = StepGraphon(std::vector<double>(7, 1.0 / 7), v).to_json();
  const auto custom = wpz_from_json(spec);
  EXPECT_DOUBLE_EQ(custom->tile(P::DA, P::DA, 0.5, 0.5), 0.9);
  EXPECT_DOUBLE_EQ(custom->tile(P::DA, P::DB, 0.5, 0.5), 0.1);
  // Degrees stay constant: the Q column absorbs the change.
  EXPECT_NEAR(degree(*custom, P::embed(P::DA, 0.3)).value, construction_degree(P::DA), 1e-12);
  EXPECT_THROW(wpz_from_json(Json{{"kind", "wpz"}}), ValidationError);
}
