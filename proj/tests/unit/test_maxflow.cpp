#include <cmath>

#include "doctest.h"
#include "massseg/eval.hpp"
#include "massseg/maxflow.hpp"
#include "oracles.hpp"

using namespace massseg;

TEST_CASE("single pixel picks the cheaper label") {
  PotentialStack s;
  s.lattice = {1, 1};
  s.unary.push_back({{0.2}, {0.7}});
  CHECK(infer(s, {{1.0}, {}})[0] == kMass);
  CHECK(infer(s, {{-1.0}, {}})[0] == kBackground);
}

TEST_CASE("strong coupling on a 1x2 lattice forces agreement") {
  PotentialStack s;
  s.lattice = {2, 1};
  s.edges = lattice_edges(s.lattice);
  s.unary.push_back({{0.0, 1.0}, {1.0, 0.3}});
  s.pairwise.push_back({1.0});
  // Without coupling the labels disagree.
  const auto free = infer(s, {{1.0}, {0.0}});
  CHECK(free[0] == kMass);
  CHECK(free[1] == kBackground);
  // Coupling 2: (+,+) costs 1.0, (-,-) 1.3, (+,-) 0.3 + 2.
  const auto tied = infer(s, {{1.0}, {2.0}});
  CHECK(tied[0] == kMass);
  CHECK(tied[1] == kMass);
}

TEST_CASE("loss augmentation flips a pixel whose margin is below one") {
  PotentialStack s;
  s.lattice = {1, 1};
  s.unary.push_back({{0.0}, {0.5}});
  const LabelMask gt({1, 1}, kMass);
  CHECK(infer(s, {{1.0}, {}})[0] == kMass);
  CHECK(infer_loss_augmented(s, {{1.0}, {}}, gt)[0] == kBackground);
  CHECK(infer_loss_augmented(s, {{3.0}, {}}, gt)[0] == kMass);
}

TEST_CASE("min-cut inference matches exhaustive search") {
  Rng rng(41);
  for (int t = 0; t < 300; ++t) {
    const int w = 2 + static_cast<int>(rng.below(3)), h = 2 + static_cast<int>(rng.below(3));
    const auto g = oracle::random_grid(rng, w, h, 1 + static_cast<int>(rng.below(3)),
                                       1 + static_cast<int>(rng.below(2)), 2.0);
    const auto s = g.stack();
    const auto wts = g.weights();
    const auto y = infer(s, wts);
    CHECK(g.energy(oracle::to_ints(y)) == doctest::Approx(oracle::grid_minimum(g)).epsilon(1e-12).scale(1.0));

    std::vector<Label> ref(g.size());
    for (auto& l : ref) l = rng.bernoulli(0.5) ? kMass : kBackground;
    const LabelMask gt(s.lattice, ref);
    const auto ref_ints = oracle::to_ints(gt);
    const auto ya = infer_loss_augmented(s, wts, gt);
    const double got = g.energy(oracle::to_ints(ya)) - oracle::disagreements(ref_ints, oracle::to_ints(ya));
    CHECK(got == doctest::Approx(oracle::grid_minimum(g, &ref_ints)).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("flow value equals cut capacity and cut value plus constant is the energy") {
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(rng, 4, 4, 2, 2, 1.5);
    const auto s = g.stack();
    const auto net = build_flow_network(s, g.weights());
    const auto cut = min_cut(net);
    CHECK(cut.flow_value == doctest::Approx(cut.cut_value).epsilon(1e-12).scale(1.0));
    CHECK(cut.cut_value + net.constant ==
          doctest::Approx(energy(cut.labeling, s, g.weights())).epsilon(1e-12).scale(1.0));
    // Any labeling's cut capacity tracks its energy by the same constant.
    std::vector<Label> other(16);
    for (auto& l : other) l = rng.bernoulli(0.5) ? kMass : kBackground;
    const LabelMask y(s.lattice, other);
    CHECK(cut_capacity(net, y) + net.constant == doctest::Approx(energy(y, s, g.weights())).epsilon(1e-12).scale(1.0));
    CHECK(cut_capacity(net, y) >= cut.cut_value - 1e-12);
  }
}

TEST_CASE("larger lattices: min-cut beats or ties local perturbations") {
  Rng rng(43);
  for (int t = 0; t < 10; ++t) {
    const auto g = oracle::random_grid(rng, 40, 40, 3, 2, 1.0);
    const auto s = g.stack();
    const auto y = infer(s, g.weights());
    const double e = energy(y, s, g.weights());
    for (int k = 0; k < 200; ++k) {
      LabelMask z = y;
      const auto i = rng.below(z.size());
      z.set(i, static_cast<Label>(-z[i]));
      CHECK(energy(z, s, g.weights()) >= e - 1e-9);
    }
  }
}

TEST_CASE("generic max-flow graph on a textbook network") {
  // s->0 (3), s->1 (2), 0->1 (1), 0->t (2), 1->t (3): max flow 5.
  MaxFlowGraph g(2);
  g.add_terminal(0, 3.0, 2.0);
  g.add_terminal(1, 2.0, 3.0);
  g.add_edge(0, 1, 1.0, 0.0);
  CHECK(g.solve() == doctest::Approx(5.0));
}

TEST_CASE("max-flow graph: chain bottleneck") {
  MaxFlowGraph g(3);
  g.add_terminal(0, 10.0, 0.0);
  g.add_terminal(2, 0.0, 10.0);
  g.add_edge(0, 1, 4.0, 0.0);
  g.add_edge(1, 2, 2.5, 0.0);
  CHECK(g.solve() == doctest::Approx(2.5));
  CHECK(g.on_source_side(0));
  CHECK(g.on_source_side(1));
  CHECK_FALSE(g.on_source_side(2));
}

TEST_CASE("negative pairwise weights are rejected") {
  Rng rng(44);
  const auto g = oracle::random_grid(rng, 3, 3, 1, 1);
  CHECK_THROWS_AS(build_flow_network(g.stack(), ModelWeights{{1.0}, {-0.5}}), std::invalid_argument);
}

TEST_CASE("brute-force oracle agrees with the independent enumeration") {
  Rng rng(45);
  for (int t = 0; t < 50; ++t) {
    const auto g = oracle::random_grid(rng, 3, 3, 2, 1);
    const auto y = brute_force_infer(g.stack(), g.weights());
    CHECK(g.energy(oracle::to_ints(y)) == doctest::Approx(oracle::grid_minimum(g)).epsilon(1e-12).scale(1.0));
  }
}
