#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <stdexcept>

#include "doctest.h"
#include "massseg/commands.hpp"
#include "massseg/io.hpp"
#include "oracles.hpp"

using namespace massseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("massseg_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RbmLayer random_layer(Rng& rng, std::size_t nv, std::size_t nh) {
  RbmLayer l = RbmLayer::zeros(nv, nh);
  for (auto& w : l.weights) w = rng.normal();
  for (auto& a : l.visible_bias) a = rng.normal();
  for (auto& b : l.hidden_bias) b = rng.normal();
  return l;
}

TrainedModel random_model(Rng& rng) {
  TrainedModel m;
  m.config.roi_size = 6;
  m.config.unaries = {UnarySpec::parse("prior"), UnarySpec::parse("gmm"), UnarySpec::parse("dbn3")};
  m.config.dbn_layers = {4, 3};
  m.config.ssvm_C = 123.456;
  m.config.gamma = 0.1 + rng.uniform();
  m.prior.lattice = {6, 6};
  for (int i = 0; i < 36; ++i) m.prior.prob.push_back(rng.uniform(0.001, 0.999));
  for (int k = 0; k < 3; ++k) {
    m.gmm.mass.components.push_back({rng.uniform(), rng.uniform(), rng.uniform(1e-4, 1.0)});
    m.gmm.background.components.push_back({rng.uniform(), rng.uniform(), rng.uniform(1e-4, 1.0)});
  }
  DbnModel d;
  d.patch_size = 3;
  d.layers.push_back(random_layer(rng, 9, 4));
  d.top = random_layer(rng, 6, 3);
  m.dbns.push_back(d);
  m.weights = {{rng.normal(), rng.normal(), rng.normal()}, {rng.uniform(), rng.uniform()}};
  return m;
}

}  // namespace

TEST_CASE("pgm round trip at 8 and 16 bits") {
  Rng rng(71);
  for (int depth : {8, 16}) {
    std::vector<std::uint16_t> s(35);
    for (auto& v : s) v = static_cast<std::uint16_t>(rng.below(depth == 8 ? 256 : 65536));
    const RawImage img({7, 5}, depth, s);
    const auto bytes = encode_pgm(img);
    CHECK(parse_pgm(bytes) == img);
  }
}

TEST_CASE("pgm 16-bit samples are big-endian") {
  const RawImage img({1, 1}, 16, {0x1234});
  const auto bytes = encode_pgm(img);
  CHECK(bytes.substr(bytes.size() - 2) == std::string("\x12\x34"));
}

TEST_CASE("pgm header with comments and 12-bit maxval") {
  const std::string bytes = std::string("P5\n# comment\n2 1\n4095\n") + std::string("\x0f\xff\x00\x01", 4);
  const auto img = parse_pgm(bytes);
  CHECK(img.bit_depth() == 16);
  CHECK(img.at(0, 0) == 4095);
  CHECK(img.at(1, 0) == 1);
}

TEST_CASE("malformed pgm is a data error") {
  CHECK_THROWS_AS(parse_pgm("P2\n1 1\n255\n0"), DataError);
  CHECK_THROWS_AS(parse_pgm("P5\n2 2\n255\n\x01"), DataError);
  CHECK_THROWS_AS(parse_pgm("P5\n1 1\n100\n\xff"), DataError);
  CHECK_THROWS_AS(read_pgm("/nonexistent/file.pgm"), DataError);
}

TEST_CASE("masks convert to 0/255 images and back") {
  const LabelMask m({3, 1}, std::vector<Label>{1, -1, 1});
  const auto img = mask_to_image(m);
  CHECK(img.samples() == std::vector<std::uint16_t>{255, 0, 255});
  CHECK(image_to_mask(img) == m);
}

TEST_CASE("manifest parsing") {
  const std::string text =
      "# image\tmask\tcx\tcy\tscale\tsplit\n"
      "a.pgm\tam.pgm\t10\t12.5\t8\ttrain\n"
      "\n"
      "/abs/b.pgm\tbm.pgm\t1\t2\t3\ttest\n";
  const auto m = parse_manifest(text, "/data");
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].image == fs::path("/data/a.pgm"));
  CHECK(m.records[1].image == fs::path("/abs/b.pgm"));
  CHECK(m.records[0].annotation.center_y == 12.5);
  CHECK(m.split(Split::test).size() == 1);
  CHECK(parse_manifest(format_manifest(m), "/x").records.size() == 2);

  CHECK_THROWS_AS(parse_manifest("a\tb\t1\t2\t3\n", "/"), DataError);
  CHECK_THROWS_AS(parse_manifest("a\tb\t1\tx\t3\ttrain\n", "/"), DataError);
  CHECK_THROWS_AS(parse_manifest("a\tb\t1\t2\t3\tvalidate\n", "/"), DataError);
  CHECK_THROWS_AS(parse_manifest("a\tb\t1\t2\t0\ttrain\n", "/"), DataError);
  CHECK_THROWS_AS(parse_manifest("a\tb\t1\t2\t3\ttrain\na\tc\t1\t2\t3\ttest\n", "/"), DataError);
}

TEST_CASE("model file round trip is bit-exact") {
  Rng rng(72);
  for (int t = 0; t < 5; ++t) {
    const auto m = random_model(rng);
    const auto bytes = encode_model(m);
    const auto back = decode_model(bytes);
    CHECK(back == m);
    CHECK(encode_model(back) == bytes);
  }
  const auto dir = scratch("model");
  const auto m = random_model(rng);
  save_model(dir / "m.bin", m);
  CHECK(load_model(dir / "m.bin") == m);
}

TEST_CASE("corrupt model files are rejected") {
  Rng rng(73);
  const auto bytes = encode_model(random_model(rng));
  CHECK_THROWS_AS(decode_model("NOTAMODEL"), DataError);
  CHECK_THROWS_AS(decode_model(bytes.substr(0, bytes.size() - 3)), DataError);
  auto wrong_version = bytes;
  wrong_version[8] = 9;
  CHECK_THROWS_AS(decode_model(wrong_version), DataError);
}

TEST_CASE("config text round trip and errors") {
  ModelConfig c;
  c.ssvm_C = 0.1;
  c.gamma = 1.0 / 3.0;
  c.unaries = {UnarySpec::parse("dbn7"), UnarySpec::parse("prior")};
  c.pairwise = {PairwiseKind::contrast};
  CHECK(parse_config(format_config(c)) == c);
  CHECK(config_fingerprint(c) == config_fingerprint(parse_config(format_config(c))));
  CHECK(config_fingerprint(c) != config_fingerprint(ModelConfig{}));

  const auto d = parse_config("# comment\npatch_sizes = 3, 7\nlayers=20,10\nssvm_C=10 # inline\n");
  CHECK(d.patch_sizes() == std::vector<int>{3, 7});
  CHECK(d.dbn_layers == std::vector<std::size_t>{20, 10});
  CHECK(d.ssvm_C == 10.0);
  CHECK_THROWS_AS(parse_config("bogus=1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("gamma\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("gamma=-1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("patch_sizes=4\n"), std::invalid_argument);
}

TEST_CASE("environment overrides configuration keys") {
  setenv("MASSSEG_SSVM_C", "42", 1);
  setenv("MASSSEG_PATCH_SIZES", "5", 1);
  ModelConfig c;
  apply_env_overrides(c);
  unsetenv("MASSSEG_SSVM_C");
  unsetenv("MASSSEG_PATCH_SIZES");
  CHECK(c.ssvm_C == 42.0);
  CHECK(c.patch_sizes() == std::vector<int>{5});
}

TEST_CASE("report mean matches its per-image lines") {
  EvalReport r;
  r.ids = {"a", "b", "c"};
  r.dice = {0.5, 0.75, 1.0 / 3.0};
  r.seconds = {0.1, 0.2, 0.3};
  r.mean_dice = (0.5 + 0.75 + 1.0 / 3.0) / 3.0;
  r.fingerprint = "abc";
  std::istringstream in(format_report_text(r));
  std::string line;
  double sum = 0.0, mean = -1.0;
  int n = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "dice") {
      std::string id;
      double v;
      ls >> id >> v;
      sum += v;
      ++n;
    } else if (tag == "mean_dice") {
      ls >> mean;
    }
  }
  CHECK(n == 3);
  CHECK(mean == doctest::Approx(sum / n).epsilon(1e-15));
  CHECK(format_report_text(r).find("seconds") == std::string::npos);
  CHECK(format_report_json(r).find("\"mean_dice\"") != std::string::npos);
  CHECK(format_timing(r).find("mean_seconds") != std::string::npos);
}
