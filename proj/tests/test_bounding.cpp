#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "graphonforge/bounding.hpp"
#include "graphonforge/fixtures.hpp"

using namespace graphonforge;

namespace {

MonomialPolynomial poly(std::initializer_list<std::pair<Multiset, double>> terms) {
  MonomialPolynomial p;
  for (const auto& [m, c] : terms) p.set(rank(m), c);
  return p;
}

// Direct evaluation from the multiset form, independent of the rank map.
double eval_terms(const std::vector<std::pair<Multiset, double>>& terms, const std::vector<double>& z) {
  double s = 0;
  for (const auto& [m, c] : terms) {
    double v = c;
    for (int e : m.elements()) v *= z[static_cast<std::size_t>(e - 1)];
    s += v;
  }
  return s;
}

}  // namespace

TEST(CoefficientBound, Values) {
  EXPECT_DOUBLE_EQ(coefficient_bound(1), 0.25 / 9);
  EXPECT_DOUBLE_EQ(coefficient_bound(2), 1.0 / 16 / 9);
  EXPECT_DOUBLE_EQ(coefficient_bound(3), 1.0 / 256 / 9);
  EXPECT_EQ(coefficient_bound(11), 0.0);
  EXPECT_EQ(coefficient_bound(1000), 0.0);
}

TEST(Polynomial, EvaluationAndDerivativeMatchOracles) {
  const std::vector<std::pair<Multiset, double>> terms{
      {Multiset{}, 0.01}, {Multiset{1}, 0.005}, {Multiset{1, 1}, 1e-6}, {Multiset{2}, -3e-4}};
  MonomialPolynomial p;
  for (const auto& [m, c] : terms) p.set(rank(m), c);
  RandomStream r(1, 0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z{r.uniform(), r.uniform()};
    EXPECT_NEAR(p.eval(z), eval_terms(terms, z), 1e-17);
    for (int n = 1; n <= 2; ++n) {
      auto zp = z, zm = z;
      const double h = 1e-6;
      zp[static_cast<std::size_t>(n - 1)] += h;
      zm[static_cast<std::size_t>(n - 1)] -= h;
      const double fd = (eval_terms(terms, zp) - eval_terms(terms, zm)) / (2 * h);
      EXPECT_NEAR(p.partial(z, n), fd, 1e-9);
      EXPECT_NEAR(detail::derivative(p, n).eval(z), fd, 1e-9);
    }
  }
}

TEST(Polynomial, EnclosureContainsValues) {
  RandomStream r(2, 0);
  for (int t = 0; t < 50; ++t) {
    MonomialPolynomial p;
    for (int k = 0; k < 6; ++k) p.set(1 + r.below(40), r.uniform(-1, 1));
    const auto [lo, hi] = detail::enclose(p);
    for (int s = 0; s < 50; ++s) {
      std::vector<double> z(10);
      for (auto& v : z) v = r.uniform();
      const double v = p.eval(z);
      EXPECT_GE(v, lo - 1e-15);
      EXPECT_LE(v, hi + 1e-15);
    }
  }
}

TEST(BoundingJson, RoundTripAndErrors) {
  const auto s = reference_bounding();
  const auto back = BoundingSequence::from_json(s.to_json());
  EXPECT_TRUE(back == s);
  EXPECT_EQ(back.length(), 8);
  EXPECT_THROW(BoundingSequence::from_json(Json{{"z_dim", 3}}), ValidationError);
  EXPECT_THROW(BoundingSequence::from_json(Json::parse(R"({"triples":[{"p":{"x":1}}]})")), ValidationError);
  EXPECT_THROW(BoundingSequence::from_json(Json::parse(R"({"triples":[{"p":{"0":1}}]})")), ValidationError);
  EXPECT_THROW(BoundingSequence::from_json(Json::parse(R"({"triples":[{},{}],"length":1})")), ValidationError);
  // Past the stored length the triple is (0, 0, 1).
  EXPECT_TRUE(s.triple(100).trivial());
}

TEST(Validation, ReferenceSequenceIsValid) {
  const auto rep = validate(reference_bounding());
  EXPECT_TRUE(rep.valid);
  for (const auto& t : rep.triples) EXPECT_TRUE(t.certified);
  EXPECT_TRUE(reference_bounding().admissible(reference_z()));
  EXPECT_TRUE(reference_bounding().admissible(reference_z_alt()));
}

TEST(Validation, EachClauseRejects) {
  auto first_clause = [](const BoundingTriple& t, int n = 2) { return validate_triple(t, 1, n).clause; };
  EXPECT_EQ(first_clause({{}, -0.1, 0.5}), "0 <= l");
  EXPECT_EQ(first_clause({{}, 0.6, 0.5}), "l <= u");
  EXPECT_EQ(first_clause({{}, 0.0, 1.5}), "u <= 1");
  EXPECT_EQ(first_clause({poly({{Multiset{}, 0.1}}), 0, 1}), "coefficient bound");
  EXPECT_EQ(first_clause({poly({{Multiset{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, 1e-300}}), 0, 1}), "coefficient bound");
  EXPECT_EQ(first_clause({poly({{Multiset{2}, 1e-4}}), 0, 1}, 1), "truncation");
  EXPECT_EQ(first_clause({poly({{Multiset{}, -0.01}}), 0, 1}), "range [0,1]");
}

TEST(Validation, StrictFlagRechecksIntervalFailures) {
  // Concave in z1 with minimum 0.5e-6 at z1 = 0, but the enclosure dips below 0.
  const BoundingTriple t{poly({{Multiset{}, 0.5e-6}, {Multiset{1}, 0.005}, {Multiset{1, 1}, -1e-6}}), 0, 1};
  const auto loose = validate_triple(t, 1, 1);
  EXPECT_FALSE(loose.ok);
  ValidateOptions strict;
  strict.strict = true;
  const auto s = validate_triple(t, 1, 1, strict);
  EXPECT_TRUE(s.ok);
  EXPECT_FALSE(s.certified);
  // Genuine violation: a witness is found.
  const BoundingTriple bad{poly({{Multiset{}, 0.0}, {Multiset{1}, -0.005}}), 0, 1};
  const auto w = validate_triple(bad, 1, 1, strict);
  EXPECT_FALSE(w.ok);
  EXPECT_NE(w.detail.find("witness"), std::string::npos);
}

TEST(Strengthening, ReplacesOnlyTrivialTriples) {
  const auto s = reference_bounding();
  const BoundingTriple t{poly({{Multiset{}, 0.01}}), 0.0, 0.02};
  EXPECT_THROW(strengthen(s, 1, t), ValidationError);
  const auto s4 = strengthen(s, 4, t);
  EXPECT_TRUE(is_k_strengthening(s, s4, 3));
  EXPECT_FALSE(is_k_strengthening(s, s4, 4));
  const auto s9 = strengthen(s, 9, t);
  EXPECT_EQ(s9.length(), 9);
  EXPECT_TRUE(is_k_strengthening(s, s9, 8));
  EXPECT_TRUE(is_k_strengthening(s, s, 100));
  EXPECT_THROW(strengthen(s, 6, {{}, 0.7, 0.2}), ValidationError);
  const auto tr = s.truncated(2);
  EXPECT_FALSE(tr.triple(2).trivial());
  EXPECT_TRUE(tr.triple(3).trivial());
  EXPECT_TRUE(is_k_strengthening(tr, s, 2));
}

TEST(Closeness, BoundDominatesSampledDeviation) {
  RandomStream r(4, 0);
  for (int t = 0; t < 20; ++t) {
    MonomialPolynomial f, g;
    for (int k = 0; k < 5; ++k) {
      f.set(1 + r.below(30), r.uniform(-0.1, 0.1));
      g.set(1 + r.below(30), r.uniform(-0.1, 0.1));
    }
    const auto c = epsilon_close(f, g, 6, {500, static_cast<std::uint64_t>(t)});
    EXPECT_LE(c.sampled, c.bound + 1e-15);
  }
  const auto p = poly({{Multiset{1}, 0.003}});
  EXPECT_EQ(epsilon_close(p, p, 3).bound, 0.0);
}
