// massseg: train, apply and evaluate the CRF mass segmenter.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "massseg/commands.hpp"

namespace {

bool parse_center(const std::string& text, massseg::RoiAnnotation& ann) {
  std::istringstream in(text);
  char comma = 0;
  if (!(in >> ann.center_x >> comma >> ann.center_y) || comma != ',') return false;
  return (in >> std::ws).eof();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mass segmentation in mammogram ROIs with a structured CRF"};
  app.require_subcommand(1);

  massseg::TrainArgs train;
  std::string train_config;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Fit potentials and SSVM weights on the train split");
  train_cmd->add_option("--manifest", train.manifest, "Dataset manifest (TSV)")->required();
  train_cmd->add_option("--config", train_config, "key=value configuration file");
  train_cmd->add_option("--out", train.out, "Output model file")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the configured seed");

  massseg::SegmentArgs seg;
  std::string center;
  auto* seg_cmd = app.add_subcommand("segment", "Segment one annotated image");
  seg_cmd->add_option("--model", seg.model, "Model file")->required();
  seg_cmd->add_option("--image", seg.image, "Input PGM image")->required();
  seg_cmd->add_option("--center", center, "Annotated mass centre as x,y")->required();
  seg_cmd->add_option("--scale", seg.annotation.scale, "Annotated mass scale in pixels")->required();
  seg_cmd->add_option("--out", seg.out, "Output mask PGM (ROI lattice, 0/255)")->required();
  seg_cmd->add_option("--repeat", seg.repeat, "Repetitions for the timing average");

  massseg::EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Dice report on the test split");
  eval_cmd->add_option("--model", eval.model, "Model file")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Dataset manifest (TSV)")->required();
  eval_cmd->add_option("--out", eval.out, "Report path (.json and .timing.tsv written alongside)")
      ->required();

  massseg::SynthArgs synth;
  std::size_t test_count = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with manifest");
  synth_cmd->add_option("--count", synth.count, "Number of samples")->required();
  auto* test_opt = synth_cmd->add_option("--test-count", test_count, "Samples in the test split");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? massseg::kExitOk : massseg::kExitUsage;
  }

  if (*train_cmd) {
    if (!train_config.empty()) train.config = train_config;
    if (*seed_opt) train.seed = train_seed;
    return massseg::cmd_train(train, std::cout, std::cerr);
  }
  if (*seg_cmd) {
    if (!parse_center(center, seg.annotation)) {
      std::cerr << "error: --center expects x,y\n";
      return massseg::kExitUsage;
    }
    return massseg::cmd_segment(seg, std::cout, std::cerr);
  }
  if (*eval_cmd) return massseg::cmd_evaluate(eval, std::cout, std::cerr);
  if (*test_opt) synth.test_count = test_count;
  return massseg::cmd_synth(synth, std::cout, std::cerr);
}
