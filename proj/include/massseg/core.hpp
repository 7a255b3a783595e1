#pragma once

// Lattice data model and the CRF energy.
//
// Labels live on a width x height pixel lattice with 4-connectivity. The
// energy is a weighted sum of unary potentials (per pixel, per label) and
// pairwise potentials (per lattice edge, nonzero only when the two labels
// differ). Lower energy means a more probable labeling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace massseg {

struct Lattice {
  int width = 0;
  int height = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  friend bool operator==(const Lattice&, const Lattice&) = default;
};

/// Grayscale region of interest with intensities in [0,1], row-major.
class RoiImage {
 public:
  RoiImage() = default;
  RoiImage(Lattice lattice, std::vector<double> intensities);
  /// Constant image.
  RoiImage(Lattice lattice, double value);

  const Lattice& lattice() const noexcept { return lattice_; }
  int width() const noexcept { return lattice_.width; }
  int height() const noexcept { return lattice_.height; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double at(int x, int y) const noexcept { return values_[lattice_.index(x, y)]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  Lattice lattice_;
  std::vector<double> values_;
};

using Label = std::int8_t;
inline constexpr Label kMass = 1;
inline constexpr Label kBackground = -1;

/// Per-pixel labels in {-1,+1}, row-major.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(Lattice lattice, std::vector<Label> labels);
  LabelMask(Lattice lattice, Label fill);

  const Lattice& lattice() const noexcept { return lattice_; }
  int width() const noexcept { return lattice_.width; }
  int height() const noexcept { return lattice_.height; }
  std::size_t size() const noexcept { return labels_.size(); }

  Label operator[](std::size_t i) const noexcept { return labels_[i]; }
  Label at(int x, int y) const noexcept { return labels_[lattice_.index(x, y)]; }
  void set(std::size_t i, Label label);
  std::span<const Label> labels() const noexcept { return labels_; }

  std::size_t count_positive() const noexcept;
  LabelMask complement() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  Lattice lattice_;
  std::vector<Label> labels_;
};

/// Unary weights w_1 (one per unary potential) followed by pairwise weights
/// w_2 (one per pairwise potential). Pairwise weights must be >= 0 for the
/// energy to be submodular.
struct ModelWeights {
  std::vector<double> unary;
  std::vector<double> pairwise;

  std::size_t dimension() const noexcept { return unary.size() + pairwise.size(); }
  std::vector<double> flat() const;
  static ModelWeights from_flat(std::span<const double> w, std::size_t unary_count);
  static ModelWeights zeros(std::size_t unary_count, std::size_t pairwise_count);
  bool submodular() const noexcept;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct Edge {
  std::uint32_t a;
  std::uint32_t b;
};

/// All horizontal edges in row-major order, then all vertical edges.
std::vector<Edge> lattice_edges(const Lattice& lattice);

/// Cost of each label at every pixel for one unary potential.
struct UnaryMap {
  std::vector<double> cost_mass;        // phi(y(i)=+1, x)
  std::vector<double> cost_background;  // phi(y(i)=-1, x)

  double cost(std::size_t i, Label y) const noexcept {
    return y == kMass ? cost_mass[i] : cost_background[i];
  }
};

/// Precomputed potentials of one image. `pairwise[l][e]` is the
/// label-independent factor of pairwise potential l on edge e; the potential
/// itself is that factor when the labels differ and 0 otherwise.
struct PotentialStack {
  Lattice lattice;
  std::vector<Edge> edges;
  std::vector<UnaryMap> unary;
  std::vector<std::vector<double>> pairwise;

  std::size_t unary_count() const noexcept { return unary.size(); }
  std::size_t pairwise_count() const noexcept { return pairwise.size(); }
  std::size_t feature_count() const noexcept { return unary.size() + pairwise.size(); }

  /// Throws std::invalid_argument on inconsistent map sizes or values.
  void validate() const;
  /// Keeps only the listed potentials, in the given order.
  PotentialStack select(std::span<const std::size_t> unary_ids,
                        std::span<const std::size_t> pairwise_ids) const;
};

/// Sum over potentials of w_k * (sum of that potential over the lattice).
double energy(const LabelMask& y, const PotentialStack& stack, const ModelWeights& w);

/// Per-potential sums such that energy(y, stack, w) == dot(w.flat(), joint_features(y, stack)).
std::vector<double> joint_features(const LabelMask& y, const PotentialStack& stack);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace massseg
