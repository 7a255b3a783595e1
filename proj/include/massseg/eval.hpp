#pragma once

// Segmentation accuracy, runtime measurement and the exhaustive inference
// oracle.

#include <optional>
#include <string>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

struct TrainedModel;

/// 2TP / (FP + FN + 2TP) over +1 pixels; 1 when neither mask has a positive.
double dice(const LabelMask& pred, const LabelMask& gt);

inline constexpr std::size_t kBruteForceMaxPixels = 20;

/// Exhaustive minimizer of E(y), or of E(y) - Hamming(ref, y) when a loss
/// reference is given. Ties go to the lexicographically smallest labeling
/// (-1 < +1, pixel 0 most significant). At most kBruteForceMaxPixels pixels.
LabelMask brute_force_infer(const PotentialStack& stack, const ModelWeights& w,
                            const std::optional<LabelMask>& loss_reference = std::nullopt);

/// Objective minimized by brute_force_infer for a given labeling.
double inference_objective(const LabelMask& y, const PotentialStack& stack, const ModelWeights& w,
                           const std::optional<LabelMask>& loss_reference = std::nullopt);

struct EvalItem {
  std::string id;
  RoiImage roi;  // prepared, unenhanced
  LabelMask truth;
};

struct EvalReport {
  std::vector<std::string> ids;
  std::vector<double> dice;
  std::vector<double> seconds;
  double mean_dice = 0.0;
  double mean_seconds = 0.0;
  std::string fingerprint;
  std::vector<LabelMask> predictions;
};

/// Segments every item with the model, timing each segmentation call.
EvalReport evaluate_dataset(const TrainedModel& model, const std::vector<EvalItem>& dataset);

}  // namespace massseg
