#include "massseg/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace massseg {

namespace {

void check_lattice(const Lattice& lattice) {
  if (lattice.width < 1 || lattice.height < 1) {
    throw std::invalid_argument("lattice dimensions must be >= 1");
  }
}

void require_same(const Lattice& a, const Lattice& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": lattice size mismatch (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
  }
}

}  // namespace

RoiImage::RoiImage(Lattice lattice, std::vector<double> intensities)
    : lattice_(lattice), values_(std::move(intensities)) {
  check_lattice(lattice_);
  if (values_.size() != lattice_.size()) {
    throw std::invalid_argument("RoiImage: intensity count does not match lattice");
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("RoiImage: intensity outside [0,1]");
    }
  }
}

RoiImage::RoiImage(Lattice lattice, double value)
    : RoiImage(lattice, std::vector<double>(lattice.size(), value)) {}

LabelMask::LabelMask(Lattice lattice, std::vector<Label> labels)
    : lattice_(lattice), labels_(std::move(labels)) {
  check_lattice(lattice_);
  if (labels_.size() != lattice_.size()) {
    throw std::invalid_argument("LabelMask: label count does not match lattice");
  }
  for (Label l : labels_) {
    if (l != kMass && l != kBackground) {
      throw std::invalid_argument("LabelMask: labels must be -1 or +1");
    }
  }
}

LabelMask::LabelMask(Lattice lattice, Label fill)
    : LabelMask(lattice, std::vector<Label>(lattice.size(), fill)) {}

void LabelMask::set(std::size_t i, Label label) {
  if (label != kMass && label != kBackground) {
    throw std::invalid_argument("LabelMask: labels must be -1 or +1");
  }
  labels_.at(i) = label;
}

std::size_t LabelMask::count_positive() const noexcept {
  std::size_t n = 0;
  for (Label l : labels_) n += (l == kMass);
  return n;
}

LabelMask LabelMask::complement() const {
  LabelMask out = *this;
  for (auto& l : out.labels_) l = static_cast<Label>(-l);
  return out;
}

std::vector<double> ModelWeights::flat() const {
  std::vector<double> w(unary);
  w.insert(w.end(), pairwise.begin(), pairwise.end());
  return w;
}

ModelWeights ModelWeights::from_flat(std::span<const double> w, std::size_t unary_count) {
  if (unary_count > w.size()) throw std::invalid_argument("ModelWeights: bad split");
  ModelWeights out;
  out.unary.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(unary_count));
  out.pairwise.assign(w.begin() + static_cast<std::ptrdiff_t>(unary_count), w.end());
  return out;
}

ModelWeights ModelWeights::zeros(std::size_t unary_count, std::size_t pairwise_count) {
  return ModelWeights{std::vector<double>(unary_count, 0.0),
                      std::vector<double>(pairwise_count, 0.0)};
}

bool ModelWeights::submodular() const noexcept {
  for (double w : pairwise) {
    if (!(w >= 0.0)) return false;
  }
  return true;
}

std::vector<Edge> lattice_edges(const Lattice& lattice) {
  std::vector<Edge> edges;
  const auto w = lattice.width, h = lattice.height;
  edges.reserve(static_cast<std::size_t>((w - 1) * h + w * (h - 1)));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      edges.push_back({static_cast<std::uint32_t>(lattice.index(x, y)),
                       static_cast<std::uint32_t>(lattice.index(x + 1, y))});
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x) {
      edges.push_back({static_cast<std::uint32_t>(lattice.index(x, y)),
                       static_cast<std::uint32_t>(lattice.index(x, y + 1))});
    }
  }
  return edges;
}

void PotentialStack::validate() const {
  check_lattice(lattice);
  const auto n = lattice.size();
  for (const auto& u : unary) {
    if (u.cost_mass.size() != n || u.cost_background.size() != n) {
      throw std::invalid_argument("PotentialStack: unary map size mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(u.cost_mass[i]) || !std::isfinite(u.cost_background[i])) {
        throw std::invalid_argument("PotentialStack: non-finite unary value");
      }
    }
  }
  for (const auto& p : pairwise) {
    if (p.size() != edges.size()) {
      throw std::invalid_argument("PotentialStack: pairwise map size mismatch");
    }
    for (double c : p) {
      if (!(c >= 0.0 && c <= 1.0)) {
        throw std::invalid_argument("PotentialStack: pairwise coefficient outside [0,1]");
      }
    }
  }
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n) throw std::invalid_argument("PotentialStack: bad edge");
  }
}

PotentialStack PotentialStack::select(std::span<const std::size_t> unary_ids,
                                      std::span<const std::size_t> pairwise_ids) const {
  PotentialStack out;
  out.lattice = lattice;
  out.edges = edges;
  for (auto k : unary_ids) out.unary.push_back(unary.at(k));
  for (auto l : pairwise_ids) out.pairwise.push_back(pairwise.at(l));
  return out;
}

std::vector<double> joint_features(const LabelMask& y, const PotentialStack& stack) {
  require_same(y.lattice(), stack.lattice, "joint_features");
  std::vector<double> phi(stack.feature_count(), 0.0);
  const auto n = y.size();
  for (std::size_t k = 0; k < stack.unary.size(); ++k) {
    const auto& u = stack.unary[k];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += u.cost(i, y[i]);
    phi[k] = s;
  }
  for (std::size_t l = 0; l < stack.pairwise.size(); ++l) {
    const auto& coeff = stack.pairwise[l];
    double s = 0.0;
    for (std::size_t e = 0; e < stack.edges.size(); ++e) {
      if (y[stack.edges[e].a] != y[stack.edges[e].b]) s += coeff[e];
    }
    phi[stack.unary.size() + l] = s;
  }
  return phi;
}

double energy(const LabelMask& y, const PotentialStack& stack, const ModelWeights& w) {
  require_same(y.lattice(), stack.lattice, "energy");
  if (w.unary.size() != stack.unary_count() || w.pairwise.size() != stack.pairwise_count()) {
    throw std::invalid_argument("energy: weight count does not match potential count");
  }
  double total = 0.0;
  const auto n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < stack.unary.size(); ++k) {
      total += w.unary[k] * stack.unary[k].cost(i, y[i]);
    }
  }
  for (std::size_t e = 0; e < stack.edges.size(); ++e) {
    if (y[stack.edges[e].a] == y[stack.edges[e].b]) continue;
    for (std::size_t l = 0; l < stack.pairwise.size(); ++l) {
      total += w.pairwise[l] * stack.pairwise[l][e];
    }
  }
  return total;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace massseg
