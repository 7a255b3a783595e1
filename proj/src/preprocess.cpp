#include "massseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace massseg {

RawImage::RawImage(Lattice lattice, int bit_depth, std::vector<std::uint16_t> samples)
    : lattice_(lattice), bit_depth_(bit_depth), samples_(std::move(samples)) {
  if (lattice_.width < 1 || lattice_.height < 1) {
    throw std::invalid_argument("RawImage: dimensions must be >= 1");
  }
  if (bit_depth_ != 8 && bit_depth_ != 16) {
    throw std::invalid_argument("RawImage: bit depth must be 8 or 16");
  }
  if (samples_.size() != lattice_.size()) {
    throw std::invalid_argument("RawImage: sample count does not match lattice");
  }
  const auto maxv = max_value();
  for (auto s : samples_) {
    if (s > maxv) throw std::invalid_argument("RawImage: sample exceeds bit depth");
  }
}

std::uint16_t RawImage::clamped_at(int x, int y) const noexcept {
  x = std::clamp(x, 0, lattice_.width - 1);
  y = std::clamp(y, 0, lattice_.height - 1);
  return at(x, y);
}

int roi_side(double scale, double side_factor) {
  if (!(scale > 0.0) || !(side_factor > 0.0)) {
    throw std::invalid_argument("roi_side: scale and side factor must be positive");
  }
  const int side = 2 * static_cast<int>(std::lround(side_factor * scale / 2.0));
  return std::max(side, 2);
}

RawImage extract_roi(const RawImage& img, const RoiAnnotation& ann, double side_factor) {
  if (!(ann.center_x >= 0.0 && ann.center_x < img.width() && ann.center_y >= 0.0 &&
        ann.center_y < img.height())) {
    throw std::invalid_argument("extract_roi: centre outside the image");
  }
  const int side = roi_side(ann.scale, side_factor);
  const int x0 = static_cast<int>(std::lround(ann.center_x)) - side / 2;
  const int y0 = static_cast<int>(std::lround(ann.center_y)) - side / 2;
  std::vector<std::uint16_t> out;
  out.reserve(static_cast<std::size_t>(side) * static_cast<std::size_t>(side));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) out.push_back(img.clamped_at(x0 + x, y0 + y));
  }
  return RawImage({side, side}, img.bit_depth(), std::move(out));
}

double cubic_kernel(double t, double a) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  int first;
  double w[4];
};

// Source-pixel taps for each output coordinate, pixel-centre aligned.
std::vector<Taps> make_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double fl = std::floor(src);
    const double frac = src - fl;
    auto& t = taps[static_cast<std::size_t>(o)];
    t.first = static_cast<int>(fl) - 1;
    for (int k = 0; k < 4; ++k) t.w[k] = cubic_kernel(frac - (k - 1));
  }
  return taps;
}

}  // namespace

RoiImage resize_bicubic(const RawImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bicubic: bad output size");
  const auto tx = make_taps(img.width(), out_w);
  const auto ty = make_taps(img.height(), out_h);
  const double norm = static_cast<double>(img.max_value());

  // Horizontal pass into an in_h x out_w buffer, then vertical.
  std::vector<double> rows(static_cast<std::size_t>(img.height()) * static_cast<std::size_t>(out_w));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto& t = tx[static_cast<std::size_t>(x)];
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += t.w[k] * img.clamped_at(t.first + k, y);
      rows[static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_w) * static_cast<std::size_t>(out_h));
  for (int y = 0; y < out_h; ++y) {
    const auto& t = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int sy = std::clamp(t.first + k, 0, img.height() - 1);
        s += t.w[k] * rows[static_cast<std::size_t>(sy) * static_cast<std::size_t>(out_w) +
                           static_cast<std::size_t>(x)];
      }
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x)] =
          std::clamp(s / norm, 0.0, 1.0);
    }
  }
  return RoiImage({out_w, out_h}, std::move(out));
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RoiImage enhance_contrast(const RoiImage& img, const ContrastOptions& opts) {
  if (!(opts.gamma > 0.0)) throw std::invalid_argument("enhance_contrast: gamma must be > 0");
  const std::vector<double> v(img.values().begin(), img.values().end());
  const double lo = percentile(v, opts.low_percentile);
  const double hi = percentile(v, opts.high_percentile);
  if (!(hi > lo)) return img;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
    out[i] = std::clamp(std::pow(s, opts.gamma), 0.0, 1.0);
  }
  return RoiImage(img.lattice(), std::move(out));
}

}  // namespace massseg
