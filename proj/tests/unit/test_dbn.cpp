#include <cmath>

#include "doctest.h"
#include "massseg/dbn.hpp"
#include "oracles.hpp"

using namespace massseg;

namespace {

RbmLayer random_layer(Rng& rng, std::size_t nv, std::size_t nh, double scale = 1.0) {
  RbmLayer l = RbmLayer::zeros(nv, nh);
  for (auto& w : l.weights) w = rng.uniform(-scale, scale);
  for (auto& a : l.visible_bias) a = rng.uniform(-scale, scale);
  for (auto& b : l.hidden_bias) b = rng.uniform(-scale, scale);
  return l;
}

std::vector<double> with_label(std::vector<double> h, Label y) {
  h.push_back(y == kMass ? 1.0 : 0.0);
  h.push_back(y == kMass ? 0.0 : 1.0);
  return h;
}

struct ToyData {
  std::vector<std::vector<double>> patches;
  std::vector<Label> labels;
};

ToyData toy(Rng& rng, std::size_t n, bool informative) {
  ToyData d;
  for (std::size_t k = 0; k < n; ++k) {
    const Label y = rng.bernoulli(0.5) ? kMass : kBackground;
    const double centre = informative ? (y == kMass ? 0.8 : 0.2) : 0.5;
    std::vector<double> p(9);
    for (auto& v : p) v = std::clamp(centre + 0.1 * rng.normal(), 0.0, 1.0);
    d.patches.push_back(p);
    d.labels.push_back(y);
  }
  return d;
}

}  // namespace

TEST_CASE("sigmoid and softplus") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
  for (double x = -5; x <= 5; x += 0.5) CHECK(softplus(x) == doctest::Approx(std::log1p(std::exp(x))));
}

TEST_CASE("label encoding") {
  CHECK(label_encoding(kMass) == std::pair{1.0, 0.0});
  CHECK(label_encoding(kBackground) == std::pair{0.0, 1.0});
  CHECK_THROWS_AS(label_encoding(0), std::invalid_argument);
}

TEST_CASE("free energy equals enumeration over hidden states") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t nf = 1 + rng.below(5), nh = 1 + rng.below(4);
    const auto top = random_layer(rng, nf + 2, nh, 2.0);
    std::vector<double> h(nf);
    for (auto& v : h) v = rng.uniform();
    for (Label y : {kMass, kBackground}) {
      CHECK(free_energy(top, h, y) ==
            doctest::Approx(oracle::free_energy_enumerated(top, with_label(h, y))).epsilon(1e-12));
    }
  }
}

TEST_CASE("free energy of an all-zero top layer is -m log 2") {
  const auto top = RbmLayer::zeros(5, 7);
  const std::vector<double> h{0.1, 0.2, 0.3};
  CHECK(free_energy(top, h, kMass) == doctest::Approx(-7 * std::log(2.0)));
  CHECK(free_energy(top, h, kBackground) == doctest::Approx(-7 * std::log(2.0)));
}

TEST_CASE("label bias of log 9 gives posterior 0.9") {
  DbnModel dbn;
  dbn.patch_size = 1;
  dbn.top = RbmLayer::zeros(3, 4);
  dbn.top.visible_bias[1] = std::log(9.0);
  const std::vector<double> patch{0.5};
  const auto [pp, pb] = dbn_label_posteriors(dbn, patch);
  CHECK(pp == doctest::Approx(0.9));
  CHECK(pb == doctest::Approx(0.1));
  CHECK(dbn_posterior(dbn, patch) == doctest::Approx(0.9));
}

TEST_CASE("swapping the label columns swaps the posteriors") {
  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    DbnModel dbn;
    dbn.patch_size = 3;
    dbn.layers.push_back(random_layer(rng, 9, 6));
    dbn.top = random_layer(rng, 8, 5);
    DbnModel swapped = dbn;
    for (std::size_t j = 0; j < 5; ++j) std::swap(swapped.top.w(6, j), swapped.top.w(7, j));
    std::swap(swapped.top.visible_bias[6], swapped.top.visible_bias[7]);
    std::vector<double> patch(9);
    for (auto& v : patch) v = rng.uniform();
    const auto a = dbn_label_posteriors(dbn, patch);
    const auto b = dbn_label_posteriors(swapped, patch);
    CHECK(a.first == doctest::Approx(b.second).epsilon(1e-12));
    CHECK(a.first + a.second == doctest::Approx(1.0));
  }
}

TEST_CASE("posterior is clamped") {
  DbnModel dbn;
  dbn.patch_size = 1;
  dbn.top = RbmLayer::zeros(3, 2);
  dbn.top.visible_bias[1] = 50.0;
  CHECK(dbn_posterior(dbn, std::vector<double>{0.0}, 1e-3) == doctest::Approx(0.999));
}

TEST_CASE("mean-field pass uses activation probabilities") {
  Rng rng(33);
  DbnModel dbn;
  dbn.patch_size = 1;
  dbn.layers.push_back(random_layer(rng, 1, 3));
  dbn.layers.push_back(random_layer(rng, 3, 2));
  dbn.top = random_layer(rng, 4, 2);
  const double x = 0.7;
  std::vector<double> h1(3), h2(2);
  for (std::size_t j = 0; j < 3; ++j) {
    h1[j] = 1.0 / (1.0 + std::exp(-(dbn.layers[0].hidden_bias[j] + x * dbn.layers[0].w(0, j))));
  }
  for (std::size_t j = 0; j < 2; ++j) {
    double a = dbn.layers[1].hidden_bias[j];
    for (std::size_t i = 0; i < 3; ++i) a += h1[i] * dbn.layers[1].w(i, j);
    h2[j] = 1.0 / (1.0 + std::exp(-a));
  }
  const auto got = mean_field_up(dbn, std::vector<double>{x});
  REQUIRE(got.size() == 2);
  CHECK(got[0] == doctest::Approx(h2[0]).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(h2[1]).epsilon(1e-12));
}

TEST_CASE("extract_patch replicates edges") {
  const RoiImage img({3, 2}, std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  const auto p = extract_patch(img, 0, 3);
  CHECK(p == std::vector<double>{0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.3, 0.3, 0.4});
  CHECK_THROWS_AS(extract_patch(img, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(extract_patch(img, 6, 3), std::invalid_argument);
}

TEST_CASE("rbm training with zero learning rate keeps the initialization") {
  Rng rng(34);
  std::vector<std::vector<double>> data(10, std::vector<double>(4, 0.5));
  RbmTrainOptions opts;
  opts.epochs = 3;
  opts.seed = 9;
  const auto init = [&] {
    RbmTrainOptions o = opts;
    o.epochs = 0;
    return train_rbm(data, 3, o);
  }();
  opts.learning_rate = 0.0;
  CHECK(train_rbm(data, 3, opts) == init);
  for (double a : init.visible_bias) CHECK(a == 0.0);
  CHECK_THROWS_AS(train_rbm(std::vector<std::vector<double>>{}, 3, opts), std::invalid_argument);
}

TEST_CASE("rbm training reduces reconstruction error") {
  Rng rng(35);
  std::vector<std::vector<double>> data;
  for (int n = 0; n < 400; ++n) {
    const bool on = rng.bernoulli(0.5);
    std::vector<double> v(12);
    for (std::size_t i = 0; i < 12; ++i) v[i] = ((i < 6) == on) ? 0.9 : 0.1;
    data.push_back(v);
  }
  RbmTrainOptions opts;
  opts.epochs = 0;
  const double before = reconstruction_error(train_rbm(data, 8, opts), data);
  opts.epochs = 30;
  const double after = reconstruction_error(train_rbm(data, 8, opts), data);
  CHECK(after < 0.5 * before);
}

TEST_CASE("dbn training is deterministic and learns a separable toy problem") {
  Rng rng(36);
  const auto train = toy(rng, 600, true);
  const auto test = toy(rng, 300, true);
  DbnTrainOptions opts;
  opts.hidden_sizes = {20, 20};
  opts.rbm.epochs = 30;
  opts.rbm.seed = 4;
  const auto dbn = train_dbn(train.patches, train.labels, 3, opts);
  CHECK(train_dbn(train.patches, train.labels, 3, opts) == dbn);
  int correct = 0;
  for (std::size_t n = 0; n < test.patches.size(); ++n) {
    const double p = dbn_posterior(dbn, test.patches[n]);
    correct += (p > 0.5) == (test.labels[n] == kMass);
  }
  CHECK(correct >= 0.95 * test.patches.size());
}

TEST_CASE("labels independent of the input give posteriors near one half") {
  Rng rng(37);
  const auto train = toy(rng, 600, false);
  DbnTrainOptions opts;
  opts.hidden_sizes = {20, 20};
  opts.rbm.epochs = 30;
  const auto dbn = train_dbn(train.patches, train.labels, 3, opts);
  double mean = 0.0;
  for (const auto& p : train.patches) mean += dbn_posterior(dbn, p);
  mean /= static_cast<double>(train.patches.size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("dbn structure validation") {
  DbnModel dbn;
  dbn.patch_size = 3;
  dbn.layers.push_back(RbmLayer::zeros(9, 4));
  dbn.top = RbmLayer::zeros(6, 3);
  CHECK_NOTHROW(dbn.validate());
  dbn.top = RbmLayer::zeros(5, 3);
  CHECK_THROWS_AS(dbn.validate(), std::invalid_argument);
  dbn.patch_size = 2;
  CHECK_THROWS_AS(dbn.validate(), std::invalid_argument);
}
