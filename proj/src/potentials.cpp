#include "massseg/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

#include "massseg/dbn.hpp"
#include "massseg/model.hpp"
#include "massseg/rng.hpp"

namespace massseg {

PriorModel fit_prior(std::span<const LabelMask> masks, double eps) {
  if (masks.empty()) throw std::invalid_argument("fit_prior: no masks");
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("fit_prior: eps must be in (0, 0.5)");
  const Lattice lattice = masks.front().lattice();
  std::vector<std::size_t> counts(lattice.size(), 0);
  for (const auto& m : masks) {
    if (!(m.lattice() == lattice)) throw std::invalid_argument("fit_prior: lattice mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) counts[i] += (m[i] == kMass);
  }
  PriorModel prior{lattice, std::vector<double>(lattice.size()), eps};
  const double n = static_cast<double>(masks.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    prior.prob[i] = std::clamp(static_cast<double>(counts[i]) / n, eps, 1.0 - eps);
  }
  return prior;
}

UnaryMap probability_unary(std::span<const double> mass_prob) {
  UnaryMap u;
  u.cost_mass.resize(mass_prob.size());
  u.cost_background.resize(mass_prob.size());
  for (std::size_t i = 0; i < mass_prob.size(); ++i) {
    u.cost_mass[i] = -std::log(mass_prob[i]);
    u.cost_background[i] = -std::log1p(-mass_prob[i]);
  }
  return u;
}

UnaryMap prior_unary(const PriorModel& prior) { return probability_unary(prior.prob); }

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

double log_normal(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * d * d / variance - 0.5 * std::log(variance) - kLogSqrt2Pi;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double Mixture::log_density(double x) const {
  if (components.empty()) throw std::invalid_argument("Mixture: no components");
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) {
    terms.push_back(c.weight > 0.0 ? std::log(c.weight) + log_normal(x, c.mean, c.variance)
                                   : -std::numeric_limits<double>::infinity());
  }
  return log_sum_exp(terms);
}

double Mixture::density(double x) const { return std::exp(log_density(x)); }

double mean_log_likelihood(const Mixture& mixture, std::span<const double> samples) {
  double s = 0.0;
  for (double x : samples) s += mixture.log_density(x);
  return s / static_cast<double>(samples.size());
}

EmResult fit_mixture(std::span<const double> samples, const EmOptions& opts) {
  const std::size_t m = opts.components;
  if (m < 1) throw std::invalid_argument("fit_mixture: component count must be >= 1");
  if (samples.empty()) throw std::invalid_argument("fit_mixture: no samples");
  {
    std::set<double> distinct(samples.begin(), samples.end());
    if (distinct.size() < m) {
      throw std::invalid_argument("fit_mixture: fewer distinct values than components");
    }
  }
  const std::size_t n = samples.size();
  Rng rng(opts.seed);

  // k-means++ seeding.
  std::vector<double> centers;
  centers.push_back(samples[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (samples[i] - c) * (samples[i] - c));
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      r -= d2[i];
      if (r < 0.0) break;
    }
    centers.push_back(samples[pick]);
  }

  Mixture mix;
  mix.components.resize(m);
  {
    std::vector<double> sum(m, 0.0), sum_sq(m, 0.0), count(m, 0.0);
    for (double x : samples) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < m; ++k) {
        if (std::abs(x - centers[k]) < std::abs(x - centers[best])) best = k;
      }
      sum[best] += x;
      sum_sq[best] += x * x;
      count[best] += 1.0;
    }
    for (std::size_t k = 0; k < m; ++k) {
      auto& c = mix.components[k];
      c.weight = count[k] / static_cast<double>(n);
      c.mean = sum[k] / count[k];
      c.variance = std::max(sum_sq[k] / count[k] - c.mean * c.mean, opts.variance_floor);
    }
  }

  EmResult result;
  std::vector<double> resp(n * m), terms(m), offset(m), inv_var(m);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    // E-step.
    double ll = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const auto& c = mix.components[k];
      offset[k] = c.weight > 0.0 ? std::log(c.weight) - 0.5 * std::log(c.variance) - kLogSqrt2Pi
                                 : -std::numeric_limits<double>::infinity();
      inv_var[k] = 0.5 / c.variance;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        const double d = samples[i] - mix.components[k].mean;
        terms[k] = offset[k] - d * d * inv_var[k];
      }
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t k = 0; k < m; ++k) resp[i * m + k] = std::exp(terms[k] - lse);
    }
    ll /= static_cast<double>(n);
    result.log_likelihood.push_back(ll);
    if (std::abs(ll - previous) < opts.tolerance) {
      result.converged = true;
      break;
    }
    previous = ll;

    // M-step.
    for (std::size_t k = 0; k < m; ++k) {
      double nk = 0.0, s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * m + k];
        s += resp[i * m + k] * samples[i];
      }
      auto& c = mix.components[k];
      c.weight = nk / static_cast<double>(n);
      if (nk <= 0.0) continue;
      c.mean = s / nk;
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = samples[i] - c.mean;
        v += resp[i * m + k] * d * d;
      }
      c.variance = std::max(v / nk, opts.variance_floor);
    }
    ++result.iterations;
  }
  if (!result.converged) {
    result.log_likelihood.push_back(mean_log_likelihood(mix, samples));
  }
  // Renormalize away rounding drift in the weights.
  double wsum = 0.0;
  for (const auto& c : mix.components) wsum += c.weight;
  for (auto& c : mix.components) c.weight /= wsum;
  result.mixture = std::move(mix);
  return result;
}

GmmModel fit_gmm(std::span<const RoiImage> images, std::span<const LabelMask> masks,
                 const EmOptions& opts, double eps) {
  if (images.size() != masks.size()) throw std::invalid_argument("fit_gmm: image/mask count mismatch");
  std::vector<double> mass, background;
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!(images[n].lattice() == masks[n].lattice())) {
      throw std::invalid_argument("fit_gmm: image/mask lattice mismatch");
    }
    for (std::size_t i = 0; i < images[n].size(); ++i) {
      (masks[n][i] == kMass ? mass : background).push_back(images[n][i]);
    }
  }
  if (mass.empty() || background.empty()) throw std::invalid_argument("fit_gmm: a class has no pixels");
  GmmModel g;
  g.eps = eps;
  g.mass = fit_mixture(mass, opts).mixture;
  EmOptions bg = opts;
  bg.seed = opts.seed + 1;
  g.background = fit_mixture(background, bg).mixture;
  return g;
}

double gmm_posterior(const GmmModel& gmm, double intensity) {
  // Equal class priors cancel in the ratio.
  const double d = gmm.mass.log_density(intensity) - gmm.background.log_density(intensity);
  return std::clamp(sigmoid(d), gmm.eps, 1.0 - gmm.eps);
}

double pairwise_potts(Label yi, Label yj) { return yi == yj ? 0.0 : 1.0; }

double pairwise_contrast(Label yi, Label yj, double xi, double xj) {
  if (yi == yj) return 0.0;
  const double d = xi - xj;
  return std::exp(-d * d);
}

std::vector<double> contrast_coefficients(const RoiImage& img, std::span<const Edge> edges) {
  std::vector<double> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    const double d = img[e.a] - img[e.b];
    out.push_back(std::exp(-d * d));
  }
  return out;
}

PotentialStack build_potential_stack(const RoiImage& img, const TrainedModel& model) {
  const auto& cfg = model.config;
  if (!(img.lattice() == model.prior.lattice)) {
    throw std::invalid_argument("build_potential_stack: image lattice does not match the model");
  }
  PotentialStack stack;
  stack.lattice = img.lattice();
  stack.edges = lattice_edges(stack.lattice);
  const std::size_t n = img.size();

  for (const auto& u : cfg.unaries) {
    std::vector<double> p(n);
    switch (u.kind) {
      case UnaryKind::prior:
        stack.unary.push_back(prior_unary(model.prior));
        continue;
      case UnaryKind::gmm:
        for (std::size_t i = 0; i < n; ++i) p[i] = gmm_posterior(model.gmm, img[i]);
        break;
      case UnaryKind::dbn: {
        const auto& dbn = model.dbn_for(u.patch_size);
        for (std::size_t i = 0; i < n; ++i) {
          p[i] = dbn_posterior(dbn, extract_patch(img, i, u.patch_size), cfg.clamp_epsilon);
        }
        break;
      }
    }
    stack.unary.push_back(probability_unary(p));
  }
  for (auto kind : cfg.pairwise) {
    if (kind == PairwiseKind::potts) {
      stack.pairwise.emplace_back(stack.edges.size(), 1.0);
    } else {
      stack.pairwise.push_back(contrast_coefficients(img, stack.edges));
    }
  }
  return stack;
}

}  // namespace massseg
