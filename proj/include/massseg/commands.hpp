#pragma once

// The command-line operations as library functions returning exit codes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "massseg/eval.hpp"
#include "massseg/io.hpp"
#include "massseg/model.hpp"

namespace massseg {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNotConverged = 3,
};

/// Prefix of environment variables that override configuration keys, e.g.
/// MASSSEG_SSVM_C=100 sets ssvm_C.
inline constexpr const char* kEnvPrefix = "MASSSEG_";

/// Applies every MASSSEG_<KEY> variable present in the environment.
void apply_env_overrides(ModelConfig& cfg);

/// Defaults, then the config file (if any), then environment overrides.
ModelConfig load_config(const std::optional<std::filesystem::path>& path);

/// Prepared (unenhanced) ROIs and masks of one split of a manifest.
struct PreparedSplit {
  std::vector<std::string> ids;
  std::vector<RoiImage> images;
  std::vector<LabelMask> masks;
};
PreparedSplit load_split(const DatasetManifest& manifest, Split split, const ModelConfig& cfg);

struct TrainArgs {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct SegmentArgs {
  std::filesystem::path model;
  std::filesystem::path image;
  RoiAnnotation annotation;
  std::filesystem::path out;
  /// Segmentations to time; the mask of the last one is written.
  std::size_t repeat = 1;
};
int cmd_segment(const SegmentArgs& args, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
  std::filesystem::path model;
  std::filesystem::path manifest;
  std::filesystem::path out;
};
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct SynthArgs {
  std::size_t count = 0;
  std::optional<std::size_t> test_count;  // default: count / 3
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);

}  // namespace massseg
