#include "massseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace massseg {

SynthSample synth_sample(Rng& rng, const SynthOptions& opts) {
  const int n = opts.image_size;
  if (n < 16) throw std::invalid_argument("synth: image too small");
  const double pi = std::numbers::pi;

  // Mass geometry.
  const double a = rng.uniform(opts.min_semi_major, opts.max_semi_major);
  const double b = a * rng.uniform(opts.min_aspect, 1.0);
  const double theta = rng.uniform(0.0, pi);
  const double margin = 0.25 * n;
  const double cx = rng.uniform(margin, n - margin);
  const double cy = rng.uniform(margin, n - margin);

  // Background: level, linear gradient and a sinusoidal texture.
  const double level = rng.uniform(0.25, 0.40);
  const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);
  const double tex_amp = rng.uniform(opts.min_texture, opts.max_texture);
  const double fx = rng.uniform(0.08, 0.25), fy = rng.uniform(0.08, 0.25);
  const double px = rng.uniform(0.0, 2 * pi), py = rng.uniform(0.0, 2 * pi);

  // Mass intensity profile with a soft boundary.
  const double amp = rng.uniform(opts.min_contrast, opts.max_contrast);
  const double width = rng.uniform(0.06, 0.12);
  const double core = rng.uniform(0.0, 0.15);
  const double speckle = rng.uniform(opts.min_speckle, opts.max_speckle);

  // Gaussian tissue blobs placed around the mass, partly inside the ROI.
  struct Blob {
    double x, y, sigma, amp;
  };
  std::vector<Blob> blobs;
  const int blob_count = opts.max_distractors > 0 ? static_cast<int>(rng.below(opts.max_distractors + 1)) : 0;
  for (int k = 0; k < blob_count; ++k) {
    const double angle = rng.uniform(0.0, 2 * pi);
    const double dist = a * rng.uniform(1.4, 2.4);
    blobs.push_back({cx + dist * std::cos(angle), cy + dist * std::sin(angle), a * rng.uniform(0.25, 0.5),
                     opts.distractor_contrast * rng.uniform(opts.min_contrast, opts.max_contrast)});
  }

  const double c = std::cos(theta), s = std::sin(theta);
  const Lattice lat{n, n};
  std::vector<std::uint16_t> img(lat.size()), mask(lat.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
      const double r = std::sqrt(u * u + v * v);
      double value = level + gx * (x / double(n) - 0.5) + gy * (y / double(n) - 0.5) +
                     tex_amp * std::sin(fx * x + px) * std::sin(fy * y + py);
      value += amp / (1.0 + std::exp(-(1.0 - r) / width));
      value += core * std::max(0.0, 1.0 - r * r);
      for (const auto& bl : blobs) {
        const double ex = x - bl.x, ey = y - bl.y;
        value += bl.amp * std::exp(-(ex * ex + ey * ey) / (2.0 * bl.sigma * bl.sigma));
      }
      value *= 1.0 + speckle * rng.normal();
      value = std::clamp(value, 0.0, 1.0);
      const std::size_t i = lat.index(x, y);
      img[i] = static_cast<std::uint16_t>(std::lround(value * 65535.0));
      mask[i] = r < 1.0 ? 255 : 0;
    }
  }

  SynthSample out;
  out.image = RawImage(lat, 16, std::move(img));
  out.mask = RawImage(lat, 8, std::move(mask));
  const double ratio = rng.uniform(opts.min_scale_ratio, opts.max_scale_ratio);
  out.annotation = {cx + rng.uniform(-opts.center_jitter, opts.center_jitter),
                    cy + rng.uniform(-opts.center_jitter, opts.center_jitter), ratio * a};
  return out;
}

std::vector<SynthSample> synth_dataset(std::size_t count, std::uint64_t seed, const SynthOptions& opts) {
  Rng rng(seed);
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(synth_sample(rng, opts));
  return out;
}

DatasetManifest write_synth_dataset(const std::filesystem::path& dir, std::size_t count,
                                    std::size_t test_count, std::uint64_t seed, const SynthOptions& opts) {
  if (count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (test_count > count) throw std::invalid_argument("synth: test count exceeds count");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());

  DatasetManifest manifest;
  const auto samples = synth_dataset(count, seed, opts);
  for (std::size_t k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.pgm", k);
    const std::string img_name = name;
    std::snprintf(name, sizeof name, "mask_%04zu.pgm", k);
    const std::string mask_name = name;
    write_pgm(dir / img_name, samples[k].image);
    write_pgm(dir / mask_name, samples[k].mask);
    manifest.records.push_back({img_name, mask_name, samples[k].annotation,
                                k + test_count >= count ? Split::test : Split::train});
  }
  write_manifest(dir / "manifest.tsv", manifest);
  // Return the records with paths as they resolve on disk.
  for (auto& r : manifest.records) {
    r.image = dir / r.image;
    r.mask = dir / r.mask;
  }
  return manifest;
}

}  // namespace massseg
