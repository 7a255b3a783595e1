#include "massseg/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <numeric>

#include "massseg/synth.hpp"

namespace massseg {

namespace fs = std::filesystem;

namespace {

const char* const kConfigKeys[] = {
    "unaries",        "pairwise",          "patch_sizes",        "layers",
    "roi_size",       "roi_side_factor",   "enhance",            "gamma",
    "clamp_epsilon",  "gmm_components",    "gmm_max_iterations", "gmm_tolerance",
    "variance_floor", "dbn_epochs",        "dbn_learning_rate",  "dbn_batch_size",
    "dbn_cd_steps",   "dbn_max_patches",   "ssvm_C",             "ssvm_tolerance",
    "ssvm_max_iterations", "seed"};

std::string env_name(const std::string& key) {
  std::string name = kEnvPrefix;
  for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

std::string record_id(const ManifestRecord& r) { return r.image.filename().string(); }

}  // namespace

void apply_env_overrides(ModelConfig& cfg) {
  for (const char* key : kConfigKeys) {
    if (const char* v = std::getenv(env_name(key).c_str())) set_config_value(cfg, key, v);
  }
  cfg.validate();
}

ModelConfig load_config(const std::optional<fs::path>& path) {
  ModelConfig cfg;
  if (path) cfg = parse_config(read_file(*path), cfg);
  apply_env_overrides(cfg);
  return cfg;
}

PreparedSplit load_split(const DatasetManifest& manifest, Split split, const ModelConfig& cfg) {
  PreparedSplit out;
  for (const auto& r : manifest.split(split)) {
    const RawImage img = read_pgm(r.image);
    const RawImage mask = read_pgm(r.mask);
    if (!(img.lattice() == mask.lattice())) {
      throw DataError("'" + r.mask.string() + "' does not match the size of its image");
    }
    out.ids.push_back(record_id(r));
    try {
      out.images.push_back(prepare_roi(img, r.annotation, cfg));
      out.masks.push_back(prepare_mask(mask, r.annotation, cfg));
    } catch (const std::invalid_argument& e) {
      throw DataError(r.image.string() + ": " + e.what());
    }
  }
  return out;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  ModelConfig cfg;
  try {
    cfg = load_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  try {
    const auto manifest = read_manifest(args.manifest);
    const auto train = load_split(manifest, Split::train, cfg);
    if (train.images.empty()) throw DataError("manifest has no train records");

    auto outcome = train_model(train.images, train.masks, cfg);
    save_model(args.out, outcome.model);

    double total = 0.0;
    for (std::size_t n = 0; n < train.images.size(); ++n) {
      total += dice(segment(outcome.model, train.images[n]), train.masks[n]);
    }
    out << "train_images\t" << train.images.size() << '\n'
        << "ssvm_iterations\t" << outcome.ssvm.iterations << '\n'
        << "train_mean_dice\t" << total / static_cast<double>(train.images.size()) << '\n';
    if (!outcome.ssvm.converged) {
      err << "error: SSVM reached the iteration cap (" << cfg.ssvm_max_iterations
          << ") without converging; model written anyway\n";
      return kExitNotConverged;
    }
    return kExitOk;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_segment(const SegmentArgs& args, std::ostream& out, std::ostream& err) {
  if (!(args.annotation.scale > 0.0) || args.repeat < 1) {
    err << "error: scale must be > 0 and repeat >= 1\n";
    return kExitUsage;
  }
  try {
    const TrainedModel model = load_model(args.model);
    const RawImage img = read_pgm(args.image);
    RoiImage roi;
    try {
      roi = prepare_roi(img, args.annotation, model.config);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("annotation incompatible with image: ") + e.what());
    }
    LabelMask mask;
    double seconds = 0.0;
    for (std::size_t k = 0; k < args.repeat; ++k) {
      const auto start = std::chrono::steady_clock::now();
      mask = segment(model, roi);
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    write_pgm(args.out, mask_to_image(mask));
    out << "seconds\t" << seconds / static_cast<double>(args.repeat) << '\n';
    return kExitOk;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const TrainedModel model = load_model(args.model);
    const auto manifest = read_manifest(args.manifest);
    auto test = load_split(manifest, Split::test, model.config);
    if (test.images.empty()) throw DataError("manifest has no test records");
    std::vector<EvalItem> items;
    for (std::size_t n = 0; n < test.images.size(); ++n) {
      items.push_back({test.ids[n], std::move(test.images[n]), std::move(test.masks[n])});
    }
    const EvalReport report = evaluate_dataset(model, items);
    write_report(args.out, report);
    out << "test_images\t" << report.ids.size() << '\n'
        << "mean_dice\t" << report.mean_dice << '\n'
        << "mean_seconds\t" << report.mean_seconds << '\n';
    return kExitOk;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  const std::size_t test_count = args.test_count.value_or(args.count / 3);
  if (args.count < 1 || test_count > args.count) {
    err << "error: count must be >= 1 and test count <= count\n";
    return kExitUsage;
  }
  try {
    write_synth_dataset(args.out, args.count, test_count, args.seed);
    out << "wrote " << args.count << " samples (" << test_count << " test) to " << args.out.string() << '\n';
    return kExitOk;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace massseg
