#include "doctest.h"
#include "massseg/core.hpp"
#include "oracles.hpp"

using namespace massseg;

TEST_CASE("lattice edges: count and order") {
  const Lattice lat{3, 2};
  const auto edges = lattice_edges(lat);
  // 2 rows x 2 horizontal + 3 columns x 1 vertical
  REQUIRE(edges.size() == 7);
  CHECK(edges[0].a == 0);
  CHECK(edges[0].b == 1);
  CHECK(edges[3].a == 4);
  CHECK(edges[3].b == 5);
  CHECK(edges[4].a == 0);
  CHECK(edges[4].b == 3);
  CHECK(edges[6].a == 2);
  CHECK(edges[6].b == 5);
}

TEST_CASE("roi image rejects values outside [0,1]") {
  CHECK_THROWS_AS(RoiImage({2, 1}, std::vector<double>{0.5, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(RoiImage({2, 1}, std::vector<double>{0.5}), std::invalid_argument);
  CHECK_NOTHROW(RoiImage({2, 1}, std::vector<double>{0.0, 1.0}));
}

TEST_CASE("label mask rejects labels other than +-1") {
  CHECK_THROWS_AS(LabelMask({2, 1}, std::vector<Label>{1, 0}), std::invalid_argument);
  LabelMask m({2, 2}, kBackground);
  m.set(3, kMass);
  CHECK(m.count_positive() == 1);
  CHECK(m.complement().count_positive() == 3);
  CHECK_THROWS_AS(m.set(0, 2), std::invalid_argument);
}

TEST_CASE("weights flatten and restore") {
  ModelWeights w{{1.0, -2.0}, {0.5}};
  CHECK(w.dimension() == 3);
  CHECK(w.flat() == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(ModelWeights::from_flat(w.flat(), 2).pairwise == w.pairwise);
  CHECK(w.submodular());
  CHECK_FALSE(ModelWeights{{1.0}, {-0.1}}.submodular());
}

TEST_CASE("energy on a hand-worked 2x1 lattice") {
  PotentialStack s;
  s.lattice = {2, 1};
  s.edges = lattice_edges(s.lattice);
  s.unary.push_back({{0.1, 0.7}, {0.9, 0.2}});
  s.pairwise.push_back({0.5});
  const ModelWeights w{{2.0}, {3.0}};
  // y = (+1, -1): 2 * (0.1 + 0.2) + 3 * 0.5
  CHECK(energy(LabelMask({2, 1}, std::vector<Label>{1, -1}), s, w) == doctest::Approx(2.1));
  // y = (+1, +1): 2 * (0.1 + 0.7)
  CHECK(energy(LabelMask({2, 1}, std::vector<Label>{1, 1}), s, w) == doctest::Approx(1.6));
}

TEST_CASE("energy equals w . Phi and the independent grid energy") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(rng, 3 + t % 3, 2 + t % 4, 1 + t % 3, 1 + t % 2);
    const auto s = g.stack();
    const auto w = g.weights();
    std::vector<Label> labels(g.size());
    for (auto& l : labels) l = rng.bernoulli(0.5) ? kMass : kBackground;
    const LabelMask y(s.lattice, labels);
    const double e = energy(y, s, w);
    CHECK(e == doctest::Approx(dot(w.flat(), joint_features(y, s))).epsilon(1e-12));
    CHECK(e == doctest::Approx(g.energy(oracle::to_ints(y))).epsilon(1e-12));
  }
}

TEST_CASE("energy rejects mismatched inputs") {
  Rng rng(1);
  const auto s = oracle::random_grid(rng, 2, 2, 2, 1).stack();
  CHECK_THROWS_AS(energy(LabelMask({2, 2}, kMass), s, ModelWeights{{1.0}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(energy(LabelMask({3, 2}, kMass), s, ModelWeights{{1.0, 1.0}, {1.0}}),
                  std::invalid_argument);
}

TEST_CASE("potential stack selection keeps the chosen potentials") {
  Rng rng(2);
  const auto s = oracle::random_grid(rng, 3, 3, 3, 2).stack();
  const std::vector<std::size_t> u{2, 0}, p{1};
  const auto sel = s.select(u, p);
  REQUIRE(sel.unary_count() == 2);
  REQUIRE(sel.pairwise_count() == 1);
  CHECK(sel.unary[0].cost_mass == s.unary[2].cost_mass);
  CHECK(sel.unary[1].cost_background == s.unary[0].cost_background);
  CHECK(sel.pairwise[0] == s.pairwise[1]);
}

TEST_CASE("rng is deterministic and in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) == b.below(7));
  }
}
