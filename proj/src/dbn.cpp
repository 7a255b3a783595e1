#include "massseg/dbn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "massseg/kernels.hpp"
#include "massseg/rng.hpp"

namespace massseg {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

RbmLayer RbmLayer::zeros(std::size_t visible, std::size_t hidden) {
  RbmLayer l;
  l.visible_count = visible;
  l.hidden_count = hidden;
  l.weights.assign(visible * hidden, 0.0);
  l.visible_bias.assign(visible, 0.0);
  l.hidden_bias.assign(hidden, 0.0);
  return l;
}

bool RbmLayer::valid() const noexcept {
  if (weights.size() != visible_count * hidden_count || visible_bias.size() != visible_count ||
      hidden_bias.size() != hidden_count) {
    return false;
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(weights) && finite(visible_bias) && finite(hidden_bias);
}

namespace {

void hidden_probs(const RbmLayer& l, const double* v, double* out) {
  kernels::affine_cols({l.weights.data(), l.weights.size()}, l.visible_count, l.hidden_count,
                       {v, l.visible_count}, l.hidden_bias, {out, l.hidden_count});
  for (std::size_t j = 0; j < l.hidden_count; ++j) out[j] = sigmoid(out[j]);
}

void visible_probs(const RbmLayer& l, const double* h, double* out, std::size_t softmax_tail) {
  kernels::affine_rows({l.weights.data(), l.weights.size()}, l.visible_count, l.hidden_count,
                       {h, l.hidden_count}, l.visible_bias, {out, l.visible_count});
  const std::size_t plain = l.visible_count - softmax_tail;
  for (std::size_t i = 0; i < plain; ++i) out[i] = sigmoid(out[i]);
  if (softmax_tail > 0) {
    double* tail = out + plain;
    const double m = *std::max_element(tail, tail + softmax_tail);
    double z = 0.0;
    for (std::size_t i = 0; i < softmax_tail; ++i) {
      tail[i] = std::exp(tail[i] - m);
      z += tail[i];
    }
    for (std::size_t i = 0; i < softmax_tail; ++i) tail[i] /= z;
  }
}

void check_rows(std::span<const std::vector<double>> data, std::size_t dim) {
  for (const auto& row : data) {
    if (row.size() != dim) throw std::invalid_argument("RBM: inconsistent visible dimension");
  }
}

}  // namespace

std::vector<double> rbm_hidden_activation(const RbmLayer& layer, std::span<const double> v) {
  if (v.size() != layer.visible_count) {
    throw std::invalid_argument("rbm_hidden_activation: dimension mismatch");
  }
  std::vector<double> out(layer.hidden_count);
  hidden_probs(layer, v.data(), out.data());
  return out;
}

std::vector<double> rbm_visible_activation(const RbmLayer& layer, std::span<const double> h) {
  if (h.size() != layer.hidden_count) {
    throw std::invalid_argument("rbm_visible_activation: dimension mismatch");
  }
  std::vector<double> out(layer.visible_count);
  visible_probs(layer, h.data(), out.data(), 0);
  return out;
}

RbmLayer train_rbm(std::span<const std::vector<double>> data, std::size_t hidden_count,
                   const RbmTrainOptions& opts) {
  if (data.empty()) throw std::invalid_argument("train_rbm: empty data");
  const std::size_t nv = data.front().size();
  check_rows(data, nv);
  if (nv == 0 || hidden_count == 0) throw std::invalid_argument("train_rbm: empty layer");
  if (opts.softmax_tail > nv) throw std::invalid_argument("train_rbm: softmax tail too wide");
  if (opts.batch_size == 0 || opts.cd_steps == 0) {
    throw std::invalid_argument("train_rbm: batch size and CD steps must be >= 1");
  }

  Rng rng(opts.seed);
  RbmLayer layer = RbmLayer::zeros(nv, hidden_count);
  for (auto& w : layer.weights) w = rng.normal(0.0, opts.init_stddev);

  const std::size_t nh = hidden_count;
  std::vector<double> grad_w(nv * nh), grad_a(nv), grad_b(nh);
  std::vector<double> ph0(nh), h(nh), pv(nv), phk(nh);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_a.begin(), grad_a.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);

      for (std::size_t s = start; s < end; ++s) {
        const auto& v0 = data[order[s]];
        hidden_probs(layer, v0.data(), ph0.data());
        for (std::size_t j = 0; j < nh; ++j) h[j] = rng.bernoulli(ph0[j]) ? 1.0 : 0.0;
        for (std::size_t k = 0; k < opts.cd_steps; ++k) {
          visible_probs(layer, h.data(), pv.data(), opts.softmax_tail);
          hidden_probs(layer, pv.data(), phk.data());
          if (k + 1 < opts.cd_steps) {
            for (std::size_t j = 0; j < nh; ++j) h[j] = rng.bernoulli(phk[j]) ? 1.0 : 0.0;
          }
        }
        for (std::size_t i = 0; i < nv; ++i) {
          std::span<double> row(grad_w.data() + i * nh, nh);
          kernels::axpy(v0[i], ph0, row);
          kernels::axpy(-pv[i], phk, row);
          grad_a[i] += v0[i] - pv[i];
        }
        for (std::size_t j = 0; j < nh; ++j) grad_b[j] += ph0[j] - phk[j];
      }

      const double step = opts.learning_rate / static_cast<double>(end - start);
      kernels::axpy(step, grad_w, layer.weights);
      kernels::axpy(step, grad_a, layer.visible_bias);
      kernels::axpy(step, grad_b, layer.hidden_bias);
    }
  }
  if (!layer.valid()) throw std::runtime_error("train_rbm: parameters diverged");
  return layer;
}

double reconstruction_error(const RbmLayer& layer, std::span<const std::vector<double>> data) {
  if (data.empty()) throw std::invalid_argument("reconstruction_error: empty data");
  check_rows(data, layer.visible_count);
  std::vector<double> h(layer.hidden_count), v(layer.visible_count);
  double total = 0.0;
  for (const auto& row : data) {
    hidden_probs(layer, row.data(), h.data());
    visible_probs(layer, h.data(), v.data(), 0);
    for (std::size_t i = 0; i < v.size(); ++i) total += (v[i] - row[i]) * (v[i] - row[i]);
  }
  return total / static_cast<double>(data.size() * layer.visible_count);
}

double mean_reconstruction(const RbmLayer& layer, std::span<const std::vector<double>> data) {
  if (data.empty()) throw std::invalid_argument("mean_reconstruction: empty data");
  check_rows(data, layer.visible_count);
  std::vector<double> h(layer.hidden_count), v(layer.visible_count);
  double total = 0.0;
  for (const auto& row : data) {
    hidden_probs(layer, row.data(), h.data());
    visible_probs(layer, h.data(), v.data(), 0);
    total += std::accumulate(v.begin(), v.end(), 0.0);
  }
  return total / static_cast<double>(data.size() * layer.visible_count);
}

void DbnModel::validate() const {
  if (patch_size < 1 || patch_size % 2 == 0) throw std::invalid_argument("DbnModel: bad patch size");
  std::size_t in = input_size();
  for (const auto& l : layers) {
    if (!l.valid() || l.visible_count != in) throw std::invalid_argument("DbnModel: layer chain broken");
    in = l.hidden_count;
  }
  if (!top.valid() || top.visible_count != in + 2 || top.hidden_count == 0) {
    throw std::invalid_argument("DbnModel: top layer must see h_{Q-1} plus a 2-unit label block");
  }
}

std::vector<double> extract_patch(const RoiImage& img, std::size_t i, int patch_size) {
  if (patch_size < 1 || patch_size % 2 == 0) {
    throw std::invalid_argument("extract_patch: patch size must be odd");
  }
  if (i >= img.size()) throw std::invalid_argument("extract_patch: pixel out of range");
  const int cx = static_cast<int>(i % static_cast<std::size_t>(img.width()));
  const int cy = static_cast<int>(i / static_cast<std::size_t>(img.width()));
  const int r = patch_size / 2;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(patch_size * patch_size));
  for (int dy = -r; dy <= r; ++dy) {
    const int y = std::clamp(cy + dy, 0, img.height() - 1);
    for (int dx = -r; dx <= r; ++dx) {
      const int x = std::clamp(cx + dx, 0, img.width() - 1);
      out.push_back(img.at(x, y));
    }
  }
  return out;
}

DbnModel train_dbn(std::span<const std::vector<double>> patches, std::span<const Label> labels,
                   int patch_size, const DbnTrainOptions& opts) {
  if (patches.size() != labels.size()) {
    throw std::invalid_argument("train_dbn: patch and label counts differ");
  }
  if (patches.empty()) throw std::invalid_argument("train_dbn: no training patches");
  if (opts.hidden_sizes.empty()) throw std::invalid_argument("train_dbn: empty layout");
  DbnModel dbn;
  dbn.patch_size = patch_size;
  check_rows(patches, dbn.input_size());

  std::vector<std::vector<double>> current(patches.begin(), patches.end());
  for (std::size_t q = 0; q + 1 < opts.hidden_sizes.size(); ++q) {
    RbmTrainOptions o = opts.rbm;
    o.seed = opts.rbm.seed + q;
    o.softmax_tail = 0;
    dbn.layers.push_back(train_rbm(current, opts.hidden_sizes[q], o));
    for (auto& row : current) row = rbm_hidden_activation(dbn.layers.back(), row);
  }

  for (std::size_t n = 0; n < current.size(); ++n) {
    const auto [u0, u1] = label_encoding(labels[n]);
    current[n].push_back(u0);
    current[n].push_back(u1);
  }
  RbmTrainOptions o = opts.rbm;
  o.seed = opts.rbm.seed + opts.hidden_sizes.size() - 1;
  o.softmax_tail = 2;
  dbn.top = train_rbm(current, opts.hidden_sizes.back(), o);
  dbn.validate();
  return dbn;
}

std::vector<double> mean_field_up(const DbnModel& dbn, std::span<const double> patch) {
  if (patch.size() != dbn.input_size()) throw std::invalid_argument("mean_field_up: dimension mismatch");
  std::vector<double> h(patch.begin(), patch.end());
  for (const auto& l : dbn.layers) h = rbm_hidden_activation(l, h);
  return h;
}

std::pair<double, double> label_encoding(Label y) {
  if (y != kMass && y != kBackground) throw std::invalid_argument("label_encoding: bad label");
  return {(y + 1) / 2.0, (1 - y) / 2.0};
}

double free_energy(const RbmLayer& top, std::span<const double> h, Label y) {
  if (top.visible_count != h.size() + 2 || !top.valid()) {
    throw std::invalid_argument("free_energy: dimension mismatch");
  }
  const auto [u0, u1] = label_encoding(y);
  const std::size_t nf = h.size();
  std::vector<double> v(h.begin(), h.end());
  v.push_back(u0);
  v.push_back(u1);

  std::vector<double> pre(top.hidden_count);
  kernels::affine_cols(top.weights, top.visible_count, top.hidden_count, v, top.hidden_bias, pre);
  double f = 0.0;
  for (std::size_t i = 0; i < nf; ++i) f -= top.visible_bias[i] * h[i];
  f -= top.visible_bias[nf] * u0 + top.visible_bias[nf + 1] * u1;
  for (double x : pre) f -= softplus(x);
  return f;
}

std::pair<double, double> dbn_label_posteriors(const DbnModel& dbn, std::span<const double> patch) {
  if (!dbn.trained()) throw std::invalid_argument("dbn_posterior: untrained model");
  const auto h = mean_field_up(dbn, patch);
  const double neg_pos = -free_energy(dbn.top, h, kMass);
  const double neg_bg = -free_energy(dbn.top, h, kBackground);
  const double m = std::max(neg_pos, neg_bg);
  const double lse = m + std::log1p(std::exp(-std::abs(neg_pos - neg_bg)));
  return {std::exp(neg_pos - lse), std::exp(neg_bg - lse)};
}

double dbn_posterior(const DbnModel& dbn, std::span<const double> patch, double eps) {
  return std::clamp(dbn_label_posteriors(dbn, patch).first, eps, 1.0 - eps);
}

}  // namespace massseg
