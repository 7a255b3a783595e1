#pragma once

// Model configuration, the trained model bundle, and the train/segment
// pipeline that ties the modules together.

#include <cstdint>
#include <string>
#include <vector>

#include "massseg/core.hpp"
#include "massseg/dbn.hpp"
#include "massseg/potentials.hpp"
#include "massseg/preprocess.hpp"
#include "massseg/ssvm.hpp"

namespace massseg {

enum class UnaryKind : std::uint8_t { prior = 0, gmm = 1, dbn = 2 };
enum class PairwiseKind : std::uint8_t { potts = 0, contrast = 1 };

struct UnarySpec {
  UnaryKind kind = UnaryKind::prior;
  int patch_size = 0;  // dbn only

  std::string name() const;
  /// "prior", "gmm" or "dbn<S>" (e.g. "dbn3").
  static UnarySpec parse(const std::string& name);
  friend bool operator==(const UnarySpec&, const UnarySpec&) = default;
};

std::string pairwise_name(PairwiseKind kind);
PairwiseKind parse_pairwise(const std::string& name);

struct ModelConfig {
  std::vector<UnarySpec> unaries{{UnaryKind::prior, 0},
                                 {UnaryKind::gmm, 0},
                                 {UnaryKind::dbn, 3},
                                 {UnaryKind::dbn, 5}};
  std::vector<PairwiseKind> pairwise{PairwiseKind::potts, PairwiseKind::contrast};

  // ROI
  int roi_size = 40;
  double roi_side_factor = 2.0;
  bool enhance = true;
  double gamma = 0.5;

  double clamp_epsilon = kDefaultClampEpsilon;

  // GMM
  std::size_t gmm_components = 5;
  std::size_t gmm_max_iterations = 500;
  double gmm_tolerance = 1e-7;
  double variance_floor = 1e-4;

  // DBN
  std::vector<std::size_t> dbn_layers{50, 50, 50};
  std::size_t dbn_epochs = 100;
  double dbn_learning_rate = 0.05;
  std::size_t dbn_batch_size = 32;
  std::size_t dbn_cd_steps = 1;
  /// Class-balanced random subsample of training patches per DBN; 0 = all.
  std::size_t dbn_max_patches = 8000;

  // SSVM
  double ssvm_C = 1000.0;
  double ssvm_tolerance = 1e-4;
  std::size_t ssvm_max_iterations = 200;

  std::uint64_t seed = 0;

  /// Patch sizes of the configured DBN unaries, in order.
  std::vector<int> patch_sizes() const;
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainedModel {
  ModelConfig config;
  PriorModel prior;
  GmmModel gmm;
  std::vector<DbnModel> dbns;  // one per configured patch size, same order
  ModelWeights weights;

  const DbnModel& dbn_for(int patch_size) const;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// Canonical key=value text of a configuration (one key per line, fixed order).
std::string format_config(const ModelConfig& cfg);
/// Parses key=value text on top of the defaults. Unknown keys are an error.
ModelConfig parse_config(const std::string& text, ModelConfig base = {});
/// Applies one key=value setting.
void set_config_value(ModelConfig& cfg, const std::string& key, const std::string& value);
/// 16 hex digits of the FNV-1a hash of format_config(cfg).
std::string config_fingerprint(const ModelConfig& cfg);

/// Crop and resize a raw image onto the ROI lattice (no enhancement).
RoiImage prepare_roi(const RawImage& img, const RoiAnnotation& ann, const ModelConfig& cfg);

/// The configured contrast-enhancement stage (identity when disabled).
RoiImage enhance_for_model(const RoiImage& roi, const ModelConfig& cfg);

/// Crop and resize an annotation mask (nonzero = mass) onto the ROI lattice.
LabelMask prepare_mask(const RawImage& mask, const RoiAnnotation& ann, const ModelConfig& cfg);

/// Mask from a resampled [0,1] image, +1 where the value is >= 0.5.
LabelMask threshold_mask(const RoiImage& img);

/// The training functions below take prepared, unenhanced ROIs and apply
/// enhance_for_model themselves.

/// Fits prior, GMM and DBN sub-models. Weights are left at zero.
TrainedModel fit_potential_models(std::span<const RoiImage> images,
                                  std::span<const LabelMask> masks, const ModelConfig& cfg);

struct TrainingOutcome {
  TrainedModel model;
  SsvmResult ssvm;
};

/// Full training: potential sub-models, then SSVM weights.
TrainingOutcome train_model(std::span<const RoiImage> images, std::span<const LabelMask> masks,
                            const ModelConfig& cfg);

/// SSVM weights for a model whose sub-models are already fitted.
SsvmResult train_weights(TrainedModel& model, std::span<const RoiImage> images,
                         std::span<const LabelMask> masks);

/// Segmentation of a prepared ROI: enhancement, potentials, min-cut.
LabelMask segment(const TrainedModel& model, const RoiImage& roi);

/// Potentials of a prepared ROI, enhancement included.
PotentialStack model_potentials(const TrainedModel& model, const RoiImage& roi);

/// Copy of `model` restricted to a subset of its potentials (weights dropped).
TrainedModel restrict_model(const TrainedModel& model, const std::vector<UnarySpec>& unaries,
                            const std::vector<PairwiseKind>& pairwise);

}  // namespace massseg
