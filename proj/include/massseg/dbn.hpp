#pragma once

// Deep belief network unary potential.
//
// A stack of RBMs is trained greedily with contrastive divergence: the first
// layer on raw S x S intensity patches, each following layer on the hidden
// activation probabilities of the one below. The top RBM sees the last
// hidden layer concatenated with a two-unit one-hot label block
// [(y+1)/2, (1-y)/2]. A patch is scored by a deterministic mean-field pass
// up to the top layer followed by the top RBM's free energy under each label.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

/// Bernoulli RBM. `weights` is visible_count x hidden_count, row-major.
struct RbmLayer {
  std::size_t visible_count = 0;
  std::size_t hidden_count = 0;
  std::vector<double> weights;
  std::vector<double> visible_bias;
  std::vector<double> hidden_bias;

  static RbmLayer zeros(std::size_t visible, std::size_t hidden);
  double& w(std::size_t i, std::size_t j) { return weights[i * hidden_count + j]; }
  double w(std::size_t i, std::size_t j) const { return weights[i * hidden_count + j]; }
  /// Dimensions consistent and every parameter finite.
  bool valid() const noexcept;

  friend bool operator==(const RbmLayer&, const RbmLayer&) = default;
};

/// sigma(b_j + sum_i W_ij v_i) for every hidden unit j.
std::vector<double> rbm_hidden_activation(const RbmLayer& layer, std::span<const double> v);

/// sigma(a_i + sum_j W_ij h_j) for every visible unit i.
std::vector<double> rbm_visible_activation(const RbmLayer& layer, std::span<const double> h);

struct RbmTrainOptions {
  std::size_t epochs = 100;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t cd_steps = 1;
  double init_stddev = 0.01;
  std::uint64_t seed = 0;
  /// Trailing visible units that form one softmax group (the label block).
  std::size_t softmax_tail = 0;
};

/// CD-k training. Rows of `data` are visible vectors with entries in [0,1].
RbmLayer train_rbm(std::span<const std::vector<double>> data, std::size_t hidden_count,
                   const RbmTrainOptions& opts);

/// Mean squared error between data and its one-step mean-field reconstruction.
double reconstruction_error(const RbmLayer& layer, std::span<const std::vector<double>> data);

/// Mean of the one-step mean-field reconstruction over all units and rows.
double mean_reconstruction(const RbmLayer& layer, std::span<const std::vector<double>> data);

struct DbnModel {
  int patch_size = 0;
  std::vector<RbmLayer> layers;  // unlabeled layers, bottom to top
  RbmLayer top;                  // visible = last hidden + 2 label units

  std::size_t input_size() const noexcept {
    return static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
  }
  /// Width of h_{Q-1}, the non-label part of the top layer's visible side.
  std::size_t feature_size() const noexcept {
    return layers.empty() ? input_size() : layers.back().hidden_count;
  }
  bool trained() const noexcept { return top.hidden_count > 0; }
  /// Checks layer chaining and the two-unit label block.
  void validate() const;

  friend bool operator==(const DbnModel&, const DbnModel&) = default;
};

struct DbnTrainOptions {
  /// Hidden widths bottom to top; the last entry is the top layer's width.
  std::vector<std::size_t> hidden_sizes{50, 50, 50};
  RbmTrainOptions rbm;
};

/// S x S row-major neighbourhood of pixel `i`, edge-replicated. S must be odd.
std::vector<double> extract_patch(const RoiImage& img, std::size_t i, int patch_size);

DbnModel train_dbn(std::span<const std::vector<double>> patches, std::span<const Label> labels,
                   int patch_size, const DbnTrainOptions& opts);

/// Probabilities of h_{Q-1}; returns the patch itself when there are no
/// unlabeled layers.
std::vector<double> mean_field_up(const DbnModel& dbn, std::span<const double> patch);

/// Two-unit encoding [(y+1)/2, (1-y)/2].
std::pair<double, double> label_encoding(Label y);

/// F(h, y) = -a_h.h - a_y.u - sum_j softplus(b_j + (W_h^T h)_j + (W_y^T u)_j)
double free_energy(const RbmLayer& top, std::span<const double> h, Label y);

/// (P(y=+1 | patch), P(y=-1 | patch)) from the two free energies, unclamped.
std::pair<double, double> dbn_label_posteriors(const DbnModel& dbn, std::span<const double> patch);

/// P(y=+1 | patch) clamped to [eps, 1-eps].
double dbn_posterior(const DbnModel& dbn, std::span<const double> patch, double eps = 1e-3);

double sigmoid(double x) noexcept;
/// log(1 + e^x) without overflow.
double softplus(double x) noexcept;

}  // namespace massseg
