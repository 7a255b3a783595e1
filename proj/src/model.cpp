#include "massseg/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "massseg/maxflow.hpp"
#include "massseg/rng.hpp"

namespace massseg {

std::string UnarySpec::name() const {
  switch (kind) {
    case UnaryKind::prior:
      return "prior";
    case UnaryKind::gmm:
      return "gmm";
    case UnaryKind::dbn:
      return "dbn" + std::to_string(patch_size);
  }
  return "?";
}

UnarySpec UnarySpec::parse(const std::string& name) {
  if (name == "prior") return {UnaryKind::prior, 0};
  if (name == "gmm") return {UnaryKind::gmm, 0};
  if (name.size() > 3 && name.compare(0, 3, "dbn") == 0) {
    int s = 0;
    const auto* first = name.data() + 3;
    const auto* last = name.data() + name.size();
    auto [ptr, ec] = std::from_chars(first, last, s);
    if (ec == std::errc() && ptr == last && s > 0 && s % 2 == 1) return {UnaryKind::dbn, s};
  }
  throw std::invalid_argument("unknown unary potential '" + name + "'");
}

std::string pairwise_name(PairwiseKind kind) {
  return kind == PairwiseKind::potts ? "potts" : "contrast";
}

PairwiseKind parse_pairwise(const std::string& name) {
  if (name == "potts") return PairwiseKind::potts;
  if (name == "contrast") return PairwiseKind::contrast;
  throw std::invalid_argument("unknown pairwise potential '" + name + "'");
}

std::vector<int> ModelConfig::patch_sizes() const {
  std::vector<int> out;
  for (const auto& u : unaries) {
    if (u.kind == UnaryKind::dbn) out.push_back(u.patch_size);
  }
  return out;
}

void ModelConfig::validate() const {
  if (unaries.empty()) throw std::invalid_argument("config: at least one unary potential is required");
  std::set<std::string> names;
  for (const auto& u : unaries) {
    if (!names.insert(u.name()).second) throw std::invalid_argument("config: duplicate unary " + u.name());
    if (u.kind == UnaryKind::dbn && (u.patch_size < 1 || u.patch_size % 2 == 0)) {
      throw std::invalid_argument("config: DBN patch sizes must be odd");
    }
  }
  std::set<PairwiseKind> pw(pairwise.begin(), pairwise.end());
  if (pw.size() != pairwise.size()) throw std::invalid_argument("config: duplicate pairwise potential");
  if (roi_size < 1) throw std::invalid_argument("config: roi_size must be >= 1");
  if (!(roi_side_factor > 0.0)) throw std::invalid_argument("config: roi_side_factor must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("config: gamma must be > 0");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.5)) {
    throw std::invalid_argument("config: clamp_epsilon must be in (0, 0.5)");
  }
  if (gmm_components < 1) throw std::invalid_argument("config: gmm_components must be >= 1");
  if (!(variance_floor > 0.0)) throw std::invalid_argument("config: variance_floor must be > 0");
  if (dbn_layers.empty() || std::find(dbn_layers.begin(), dbn_layers.end(), 0u) != dbn_layers.end()) {
    throw std::invalid_argument("config: layers must be a nonempty list of positive widths");
  }
  if (dbn_batch_size < 1 || dbn_cd_steps < 1) {
    throw std::invalid_argument("config: dbn_batch_size and dbn_cd_steps must be >= 1");
  }
  if (!(ssvm_C >= 0.0)) throw std::invalid_argument("config: ssvm_C must be >= 0");
  if (!(ssvm_tolerance > 0.0)) throw std::invalid_argument("config: ssvm_tolerance must be > 0");
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += f(items[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

std::string format_config(const ModelConfig& c) {
  std::ostringstream o;
  o << "unaries=" << join(c.unaries, [](const UnarySpec& u) { return u.name(); }) << '\n'
    << "pairwise=" << join(c.pairwise, pairwise_name) << '\n'
    << "roi_size=" << c.roi_size << '\n'
    << "roi_side_factor=" << fmt_double(c.roi_side_factor) << '\n'
    << "enhance=" << (c.enhance ? 1 : 0) << '\n'
    << "gamma=" << fmt_double(c.gamma) << '\n'
    << "clamp_epsilon=" << fmt_double(c.clamp_epsilon) << '\n'
    << "gmm_components=" << c.gmm_components << '\n'
    << "gmm_max_iterations=" << c.gmm_max_iterations << '\n'
    << "gmm_tolerance=" << fmt_double(c.gmm_tolerance) << '\n'
    << "variance_floor=" << fmt_double(c.variance_floor) << '\n'
    << "layers=" << join(c.dbn_layers, [](std::size_t n) { return std::to_string(n); }) << '\n'
    << "dbn_epochs=" << c.dbn_epochs << '\n'
    << "dbn_learning_rate=" << fmt_double(c.dbn_learning_rate) << '\n'
    << "dbn_batch_size=" << c.dbn_batch_size << '\n'
    << "dbn_cd_steps=" << c.dbn_cd_steps << '\n'
    << "dbn_max_patches=" << c.dbn_max_patches << '\n'
    << "ssvm_C=" << fmt_double(c.ssvm_C) << '\n'
    << "ssvm_tolerance=" << fmt_double(c.ssvm_tolerance) << '\n'
    << "ssvm_max_iterations=" << c.ssvm_max_iterations << '\n'
    << "seed=" << c.seed << '\n';
  return o.str();
}

void set_config_value(ModelConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "unaries") {
    c.unaries.clear();
    for (const auto& n : split(v, ',')) c.unaries.push_back(UnarySpec::parse(n));
  } else if (key == "pairwise") {
    c.pairwise.clear();
    for (const auto& n : split(v, ',')) {
      if (n != "none") c.pairwise.push_back(parse_pairwise(n));
    }
  } else if (key == "patch_sizes") {
    std::vector<UnarySpec> kept;
    for (const auto& u : c.unaries) {
      if (u.kind != UnaryKind::dbn) kept.push_back(u);
    }
    for (const auto& s : split(v, ',')) {
      kept.push_back(UnarySpec::parse("dbn" + s));
    }
    c.unaries = std::move(kept);
  } else if (key == "layers") {
    c.dbn_layers.clear();
    for (const auto& s : split(v, ',')) c.dbn_layers.push_back(to_uint(key, s));
  } else if (key == "roi_size") {
    c.roi_size = static_cast<int>(to_uint(key, v));
  } else if (key == "roi_side_factor") {
    c.roi_side_factor = to_double(key, v);
  } else if (key == "enhance") {
    c.enhance = to_bool(key, v);
  } else if (key == "gamma") {
    c.gamma = to_double(key, v);
  } else if (key == "clamp_epsilon") {
    c.clamp_epsilon = to_double(key, v);
  } else if (key == "gmm_components") {
    c.gmm_components = to_uint(key, v);
  } else if (key == "gmm_max_iterations") {
    c.gmm_max_iterations = to_uint(key, v);
  } else if (key == "gmm_tolerance") {
    c.gmm_tolerance = to_double(key, v);
  } else if (key == "variance_floor") {
    c.variance_floor = to_double(key, v);
  } else if (key == "dbn_epochs") {
    c.dbn_epochs = to_uint(key, v);
  } else if (key == "dbn_learning_rate") {
    c.dbn_learning_rate = to_double(key, v);
  } else if (key == "dbn_batch_size") {
    c.dbn_batch_size = to_uint(key, v);
  } else if (key == "dbn_cd_steps") {
    c.dbn_cd_steps = to_uint(key, v);
  } else if (key == "dbn_max_patches") {
    c.dbn_max_patches = to_uint(key, v);
  } else if (key == "ssvm_C") {
    c.ssvm_C = to_double(key, v);
  } else if (key == "ssvm_tolerance") {
    c.ssvm_tolerance = to_double(key, v);
  } else if (key == "ssvm_max_iterations") {
    c.ssvm_max_iterations = to_uint(key, v);
  } else if (key == "seed") {
    c.seed = to_uint(key, v);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

ModelConfig parse_config(const std::string& text, ModelConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

std::string config_fingerprint(const ModelConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : format_config(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const DbnModel& TrainedModel::dbn_for(int patch_size) const {
  for (const auto& d : dbns) {
    if (d.patch_size == patch_size) return d;
  }
  throw std::invalid_argument("model has no DBN for patch size " + std::to_string(patch_size));
}

RoiImage prepare_roi(const RawImage& img, const RoiAnnotation& ann, const ModelConfig& cfg) {
  return resize_bicubic(extract_roi(img, ann, cfg.roi_side_factor), cfg.roi_size, cfg.roi_size);
}

RoiImage enhance_for_model(const RoiImage& roi, const ModelConfig& cfg) {
  if (!cfg.enhance) return roi;
  ContrastOptions opts;
  opts.gamma = cfg.gamma;
  return enhance_contrast(roi, opts);
}

LabelMask threshold_mask(const RoiImage& img) {
  std::vector<Label> labels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) labels[i] = img[i] >= 0.5 ? kMass : kBackground;
  return LabelMask(img.lattice(), std::move(labels));
}

LabelMask prepare_mask(const RawImage& mask, const RoiAnnotation& ann, const ModelConfig& cfg) {
  // Binarize first so that any nonzero sample counts as mass.
  std::vector<std::uint16_t> bin(mask.samples().size());
  for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = mask.samples()[i] ? 255 : 0;
  const RawImage binary(mask.lattice(), 8, std::move(bin));
  return threshold_mask(prepare_roi(binary, ann, cfg));
}

namespace {

std::vector<RoiImage> enhance_all(std::span<const RoiImage> images, const ModelConfig& cfg) {
  std::vector<RoiImage> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(enhance_for_model(img, cfg));
  return out;
}

// Class-balanced subsample of (image, pixel) pairs; all pixels when cap is 0.
std::vector<std::pair<std::size_t, std::size_t>> sample_pixels(std::span<const LabelMask> masks,
                                                               std::size_t cap, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pos, neg;
  for (std::size_t n = 0; n < masks.size(); ++n) {
    for (std::size_t i = 0; i < masks[n].size(); ++i) {
      (masks[n][i] == kMass ? pos : neg).emplace_back(n, i);
    }
  }
  if (cap == 0 || pos.size() + neg.size() <= cap) {
    auto all = pos;
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  auto take = [&rng](std::vector<std::pair<std::size_t, std::size_t>>& v, std::size_t k) {
    k = std::min(k, v.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + rng.below(v.size() - i)]);
    v.resize(k);
  };
  std::size_t want_pos = cap / 2, want_neg = cap - cap / 2;
  if (pos.size() < want_pos) want_neg += want_pos - pos.size();
  if (neg.size() < want_neg) want_pos += want_neg - neg.size();
  take(pos, want_pos);
  take(neg, want_neg);
  pos.insert(pos.end(), neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  return pos;
}

}  // namespace

TrainedModel fit_potential_models(std::span<const RoiImage> images,
                                  std::span<const LabelMask> masks, const ModelConfig& cfg) {
  cfg.validate();
  if (images.empty() || images.size() != masks.size()) {
    throw std::invalid_argument("training needs a nonempty set of image/mask pairs");
  }
  const Lattice lattice{cfg.roi_size, cfg.roi_size};
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!(images[n].lattice() == lattice) || !(masks[n].lattice() == lattice)) {
      throw std::invalid_argument("training data does not match the configured ROI size");
    }
  }
  const auto enhanced = enhance_all(images, cfg);

  TrainedModel model;
  model.config = cfg;
  model.prior = fit_prior(masks, cfg.clamp_epsilon);
  model.gmm.eps = cfg.clamp_epsilon;

  for (const auto& u : cfg.unaries) {
    if (u.kind == UnaryKind::gmm) {
      EmOptions em;
      em.components = cfg.gmm_components;
      em.max_iterations = cfg.gmm_max_iterations;
      em.tolerance = cfg.gmm_tolerance;
      em.variance_floor = cfg.variance_floor;
      em.seed = cfg.seed;
      model.gmm = fit_gmm(enhanced, masks, em, cfg.clamp_epsilon);
    } else if (u.kind == UnaryKind::dbn) {
      Rng rng(cfg.seed * 7919u + static_cast<std::uint64_t>(u.patch_size));
      const auto picks = sample_pixels(masks, cfg.dbn_max_patches, rng);
      std::vector<std::vector<double>> patches;
      std::vector<Label> labels;
      patches.reserve(picks.size());
      labels.reserve(picks.size());
      for (const auto& [n, i] : picks) {
        patches.push_back(extract_patch(enhanced[n], i, u.patch_size));
        labels.push_back(masks[n][i]);
      }
      DbnTrainOptions opts;
      opts.hidden_sizes = cfg.dbn_layers;
      opts.rbm.epochs = cfg.dbn_epochs;
      opts.rbm.learning_rate = cfg.dbn_learning_rate;
      opts.rbm.batch_size = cfg.dbn_batch_size;
      opts.rbm.cd_steps = cfg.dbn_cd_steps;
      opts.rbm.seed = cfg.seed * 1000003u + static_cast<std::uint64_t>(u.patch_size) * 101u;
      model.dbns.push_back(train_dbn(patches, labels, u.patch_size, opts));
    }
  }
  model.weights = ModelWeights::zeros(cfg.unaries.size(), cfg.pairwise.size());
  return model;
}

PotentialStack model_potentials(const TrainedModel& model, const RoiImage& roi) {
  return build_potential_stack(enhance_for_model(roi, model.config), model);
}

SsvmResult train_weights(TrainedModel& model, std::span<const RoiImage> images,
                         std::span<const LabelMask> masks) {
  if (images.empty() || images.size() != masks.size()) {
    throw std::invalid_argument("training needs a nonempty set of image/mask pairs");
  }
  std::vector<SsvmSample> samples;
  samples.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    samples.push_back({model_potentials(model, images[n]), masks[n]});
  }
  SsvmOptions opts;
  opts.C = model.config.ssvm_C;
  opts.tolerance = model.config.ssvm_tolerance;
  opts.max_iterations = model.config.ssvm_max_iterations;
  SsvmResult res = train_ssvm(samples, opts);
  model.weights = res.weights;
  return res;
}

TrainingOutcome train_model(std::span<const RoiImage> images, std::span<const LabelMask> masks,
                            const ModelConfig& cfg) {
  TrainingOutcome out;
  out.model = fit_potential_models(images, masks, cfg);
  out.ssvm = train_weights(out.model, images, masks);
  return out;
}

LabelMask segment(const TrainedModel& model, const RoiImage& roi) {
  return infer(model_potentials(model, roi), model.weights);
}

TrainedModel restrict_model(const TrainedModel& model, const std::vector<UnarySpec>& unaries,
                            const std::vector<PairwiseKind>& pairwise) {
  TrainedModel out = model;
  out.config.unaries = unaries;
  out.config.pairwise = pairwise;
  out.config.validate();
  out.dbns.clear();
  for (int s : out.config.patch_sizes()) out.dbns.push_back(model.dbn_for(s));
  out.weights = ModelWeights::zeros(unaries.size(), pairwise.size());
  return out;
}

}  // namespace massseg
