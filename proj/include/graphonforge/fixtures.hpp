#pragma once

#include <vector>

#include "graphonforge/bounding.hpp"
#include "graphonforge/multiset.hpp"

namespace graphonforge {

// Small admissible sequence with L = 8, N = 6 used by the self-checks.
// Nontrivial triples sit at indices 1, 2, 3 and 5; coefficients respect
// the per-rank bounds.
inline BoundingSequence reference_bounding() {
  BoundingSequence s(8, 6);
  auto poly = [](std::initializer_list<std::pair<Multiset, double>> terms) {
    MonomialPolynomial p;
    for (const auto& [m, c] : terms) p.set(rank(m), c);
    return p;
  };
  s.set_triple(1, {poly({{Multiset{}, 0.02}}), 0.01, 0.03});
  s.set_triple(2, {poly({{Multiset{}, 0.01}, {Multiset{1}, 0.005}}), 0.005, 0.02});
  s.set_triple(3, {poly({{Multiset{}, 0.015}, {Multiset{2}, 0.0004}}), 0.0, 0.05});
  s.set_triple(5, {poly({{Multiset{}, 0.02}, {Multiset{1}, -0.004}}), 0.01, 0.025});
  return s;
}

inline std::vector<double> reference_z() { return {0.3, 0.7, 0.45, 0.9, 0.15, 0.6}; }

// Second admissible point, differing in every coordinate.
inline std::vector<double> reference_z_alt() { return {0.8, 0.2, 0.55, 0.1, 0.65, 0.35}; }

}  // namespace graphonforge
