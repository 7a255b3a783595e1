#pragma once

// Unary and pairwise potentials.
//
// Unary potentials are two-class negative log-likelihoods: a model's mass
// probability p at a pixel costs -log p for label +1 and -log(1-p) for
// label -1. Probabilities are clamped to [eps, 1-eps] first so that every
// cost is finite.

#include <cstdint>
#include <span>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

struct TrainedModel;

inline constexpr double kDefaultClampEpsilon = 1e-3;

/// Per-pixel mass frequency over the training annotations.
struct PriorModel {
  Lattice lattice;
  std::vector<double> prob;
  double eps = kDefaultClampEpsilon;

  friend bool operator==(const PriorModel&, const PriorModel&) = default;
};

PriorModel fit_prior(std::span<const LabelMask> masks, double eps = kDefaultClampEpsilon);

/// Costs from a per-pixel mass probability map (already clamped).
UnaryMap probability_unary(std::span<const double> mass_prob);

UnaryMap prior_unary(const PriorModel& prior);

struct GaussianComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

/// One-dimensional Gaussian mixture.
struct Mixture {
  std::vector<GaussianComponent> components;

  double density(double x) const;
  double log_density(double x) const;

  friend bool operator==(const Mixture&, const Mixture&) = default;
};

/// Mixtures for the mass and background classes with equal class priors.
struct GmmModel {
  Mixture mass;
  Mixture background;
  double eps = kDefaultClampEpsilon;

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

struct EmOptions {
  std::size_t components = 5;
  std::size_t max_iterations = 500;
  /// Stop when the mean per-sample log-likelihood changes by less than this.
  double tolerance = 1e-7;
  double variance_floor = 1e-4;
  std::uint64_t seed = 0;
};

struct EmResult {
  Mixture mixture;
  /// Mean per-sample log-likelihood before each M-step, plus the final value.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;
  bool converged = false;
};

/// k-means++ seeded EM on scalar samples.
EmResult fit_mixture(std::span<const double> samples, const EmOptions& opts);

/// Mean per-sample log-likelihood of `samples` under `mixture`.
double mean_log_likelihood(const Mixture& mixture, std::span<const double> samples);

/// Fits one mixture per class to the pixel intensities of that class.
GmmModel fit_gmm(std::span<const RoiImage> images, std::span<const LabelMask> masks,
                 const EmOptions& opts, double eps = kDefaultClampEpsilon);

/// P(y=+1 | intensity) with equal class priors, clamped to [eps, 1-eps].
double gmm_posterior(const GmmModel& gmm, double intensity);

double pairwise_potts(Label yi, Label yj);
double pairwise_contrast(Label yi, Label yj, double xi, double xj);

/// exp(-(x_a - x_b)^2) for every edge.
std::vector<double> contrast_coefficients(const RoiImage& img, std::span<const Edge> edges);

/// Evaluates every unary and pairwise potential enabled in the model's
/// configuration, in configuration order.
PotentialStack build_potential_stack(const RoiImage& img, const TrainedModel& model);

}  // namespace massseg
