#pragma once

// Synthetic mammogram-like mass images for smoke tests and benchmarks.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "massseg/core.hpp"
#include "massseg/io.hpp"
#include "massseg/preprocess.hpp"
#include "massseg/rng.hpp"

namespace massseg {

struct SynthOptions {
  int image_size = 128;
  double min_semi_major = 10.0;
  double max_semi_major = 20.0;
  double min_aspect = 0.6;
  /// Annotation scale is this multiple of the semi-major axis.
  double min_scale_ratio = 1.5;
  double max_scale_ratio = 2.2;
  double center_jitter = 2.0;
  /// Ranges of the background texture amplitude, the mass contrast above
  /// background and the multiplicative speckle deviation.
  double min_texture = 0.03, max_texture = 0.08;
  double min_contrast = 0.25, max_contrast = 0.40;
  double min_speckle = 0.10, max_speckle = 0.25;
  /// Bright tissue blobs near the mass, each with a contrast drawn from the
  /// mass contrast range scaled by `distractor_contrast`.
  int max_distractors = 3;
  double distractor_contrast = 1.0;
};

struct SynthSample {
  RawImage image;  // 16-bit
  RawImage mask;   // 8-bit, 0/255
  RoiAnnotation annotation;
};

/// One sample drawn from `rng`.
SynthSample synth_sample(Rng& rng, const SynthOptions& opts = {});

/// `count` samples from a generator seeded with `seed`.
std::vector<SynthSample> synth_dataset(std::size_t count, std::uint64_t seed,
                                       const SynthOptions& opts = {});

/// Writes img_NNNN.pgm, mask_NNNN.pgm and manifest.tsv into `dir`; the last
/// `test_count` samples form the test split.
DatasetManifest write_synth_dataset(const std::filesystem::path& dir, std::size_t count,
                                    std::size_t test_count, std::uint64_t seed,
                                    const SynthOptions& opts = {});

}  // namespace massseg
