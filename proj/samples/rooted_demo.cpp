#include <cstdio>
#include <memory>

#include "graphonforge/density.hpp"

// Rooted densities on the two-part graphon with parts A and B of size 1/2:
// 2/3 inside A, 1/3 between the parts and 1 inside B. The root sits in A.
int main() {
  using namespace graphonforge;
  auto w = std::make_shared<StepGraphon>(std::vector<double>{0.5, 0.5},
                                         std::vector<std::vector<double>>{{2.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0}},
                                         std::vector<std::string>{"A", "B"});
  const auto pg = PartitionedGraphon::from(w);

  DecoratedGraph triangle(3, 1, {"A", "A", "A"});
  triangle.set(0, 1, PairSpec::Edge);
  triangle.set(0, 2, PairSpec::Edge);
  triangle.set(1, 2, PairSpec::Edge);

  DecoratedGraph b_edge(3, 1, {"A", "B", "B"});
  b_edge.set(0, 1, PairSpec::NonEdge);
  b_edge.set(0, 2, PairSpec::NonEdge);
  b_edge.set(1, 2, PairSpec::Edge);

  DecoratedGraph four(4, 1, {"A", "A", "B", "B"});
  four.set(0, 1, PairSpec::Edge);
  four.set(0, 2, PairSpec::Edge);
  four.set(2, 3, PairSpec::Edge);
  four.set(0, 3, PairSpec::NonEdge);
  four.set(1, 2, PairSpec::NonEdge);
  four.set(1, 3, PairSpec::NonEdge);

  DensityOptions mc;
  mc.method = DensityMethod::MonteCarlo;
  mc.samples = 1000000;
  const DecoratedGraph* graphs[] = {&triangle, &b_edge, &four};
  const char* names[] = {"triangle in A", "edge in B, root isolated", "four vertices"};
  for (int i = 0; i < 3; ++i) {
    const auto exact = tau_rooted(*graphs[i], pg, {0.2});
    const auto est = tau_rooted(*graphs[i], pg, {0.2}, mc);
    std::printf("%-26s exact %.12f   monte carlo %.12f +- %.1e\n", names[i], exact.value, est.value, est.sigma);
  }
  return 0;
}
