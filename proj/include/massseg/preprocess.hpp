#pragma once

// ROI extraction, bicubic resampling and contrast enhancement.

#include <cstdint>
#include <functional>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

/// Integer-sampled image as read from disk (8- or 16-bit), row-major.
class RawImage {
 public:
  RawImage() = default;
  RawImage(Lattice lattice, int bit_depth, std::vector<std::uint16_t> samples);

  const Lattice& lattice() const noexcept { return lattice_; }
  int width() const noexcept { return lattice_.width; }
  int height() const noexcept { return lattice_.height; }
  int bit_depth() const noexcept { return bit_depth_; }
  std::uint32_t max_value() const noexcept { return (1u << bit_depth_) - 1u; }
  std::uint16_t at(int x, int y) const noexcept { return samples_[lattice_.index(x, y)]; }
  std::uint16_t clamped_at(int x, int y) const noexcept;
  const std::vector<std::uint16_t>& samples() const noexcept { return samples_; }

  friend bool operator==(const RawImage&, const RawImage&) = default;

 private:
  Lattice lattice_;
  int bit_depth_ = 8;
  std::vector<std::uint16_t> samples_;
};

/// Manually annotated mass centre and scale, in pixels.
struct RoiAnnotation {
  double center_x = 0.0;
  double center_y = 0.0;
  double scale = 0.0;
};

/// Crop side length for an annotation: side_factor * scale rounded to the
/// nearest even integer (at least 2).
int roi_side(double scale, double side_factor = 2.0);

/// Square crop of side roi_side(scale, side_factor) centred on the annotation.
/// Out-of-bounds samples replicate the nearest edge sample.
RawImage extract_roi(const RawImage& img, const RoiAnnotation& ann, double side_factor = 2.0);

/// Catmull-Rom (a = -0.5) bicubic resampling with intensities divided by the
/// maximum sample value and clamped to [0,1].
RoiImage resize_bicubic(const RawImage& img, int out_w, int out_h);

/// Catmull-Rom kernel weight at signed distance t.
double cubic_kernel(double t, double a = -0.5);

struct ContrastOptions {
  double low_percentile = 2.0;
  double high_percentile = 98.0;
  double gamma = 0.5;
};

/// Percentile stretch followed by gamma correction. Monotone nondecreasing.
/// Returns the input unchanged when the stretch would be degenerate.
RoiImage enhance_contrast(const RoiImage& img, const ContrastOptions& opts = {});

/// Linear-interpolation percentile (0..100) of a sample set.
double percentile(std::vector<double> values, double pct);

/// Pluggable enhancement stage; any monotone mapping of [0,1] onto [0,1].
using ContrastEnhancer = std::function<RoiImage(const RoiImage&)>;

}  // namespace massseg
