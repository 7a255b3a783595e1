#include "massseg/eval.hpp"

#include <chrono>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "massseg/model.hpp"
#include "massseg/ssvm.hpp"

namespace massseg {

double dice(const LabelMask& pred, const LabelMask& gt) {
  if (!(pred.lattice() == gt.lattice())) throw std::invalid_argument("dice: lattice size mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == kMass, g = gt[i] == kMass;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(fp + fn + 2 * tp);
}

double inference_objective(const LabelMask& y, const PotentialStack& stack, const ModelWeights& w,
                           const std::optional<LabelMask>& loss_reference) {
  double e = energy(y, stack, w);
  if (loss_reference) e -= static_cast<double>(hamming(*loss_reference, y));
  return e;
}

LabelMask brute_force_infer(const PotentialStack& stack, const ModelWeights& w,
                            const std::optional<LabelMask>& loss_reference) {
  const std::size_t n = stack.lattice.size();
  if (n > kBruteForceMaxPixels) throw std::invalid_argument("brute_force_infer: lattice too large");
  // Bit (n-1-i) of the code is pixel i, so increasing codes run through the
  // labelings in lexicographic order with pixel 0 most significant.
  LabelMask best;
  double best_value = std::numeric_limits<double>::infinity();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<Label> labels(n);
  for (std::uint64_t code = 0; code < count; ++code) {
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = ((code >> (n - 1 - i)) & 1u) ? kMass : kBackground;
    }
    LabelMask y(stack.lattice, labels);
    const double v = inference_objective(y, stack, w, loss_reference);
    if (v < best_value) {
      best_value = v;
      best = std::move(y);
    }
  }
  return best;
}

EvalReport evaluate_dataset(const TrainedModel& model, const std::vector<EvalItem>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
  EvalReport report;
  report.fingerprint = config_fingerprint(model.config);
  for (const auto& item : dataset) {
    if (!(item.roi.lattice() == model.prior.lattice) || !(item.truth.lattice() == model.prior.lattice)) {
      throw std::invalid_argument("evaluate_dataset: lattice mismatch between model and data");
    }
    const auto start = std::chrono::steady_clock::now();
    LabelMask pred = segment(model, item.roi);
    const auto stop = std::chrono::steady_clock::now();
    report.ids.push_back(item.id);
    report.dice.push_back(dice(pred, item.truth));
    report.seconds.push_back(std::chrono::duration<double>(stop - start).count());
    report.predictions.push_back(std::move(pred));
  }
  const double n = static_cast<double>(dataset.size());
  report.mean_dice = std::accumulate(report.dice.begin(), report.dice.end(), 0.0) / n;
  report.mean_seconds = std::accumulate(report.seconds.begin(), report.seconds.end(), 0.0) / n;
  return report;
}

}  // namespace massseg
