#pragma once

// Cutting-plane structured SVM (n-slack, margin rescaling) for the CRF
// weights.
//
//   min  1/2 ||w||^2 + C/N sum_n xi_n
//   s.t. w . (Phi(y') - Phi(y_n)) >= Delta(y_n, y') - xi_n   for every y'
//        xi_n >= 0,  w_pairwise >= 0
//
// Phi is joint_features, so w . Phi(y) is the energy of y. Constraints are
// generated by loss-augmented min-cut inference; the nonnegativity of the
// pairwise weights keeps every inference call exact.

#include <cstddef>
#include <functional>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

std::size_t hamming(const LabelMask& a, const LabelMask& b);

struct ViolatedConstraint {
  LabelMask labeling;
  /// Delta(gt, y') - (w.Phi(y') - w.Phi(gt)); positive means the margin is
  /// not met even with zero slack.
  double violation = 0.0;
};

ViolatedConstraint most_violated(const PotentialStack& stack, const ModelWeights& w,
                                 const LabelMask& gt);

struct ConstraintRecord {
  std::size_t sample = 0;
  std::vector<double> feature_diff;  // Phi(y') - Phi(y_n)
  double loss = 0.0;                 // Delta(y_n, y')
};

struct QpState {
  ModelWeights weights;
  std::vector<double> slacks;  // per sample, the smallest feasible for `weights`
  std::vector<double> duals;   // per constraint record
  double objective = 0.0;      // primal value at (weights, slacks)
  double dual_objective = 0.0;
  /// Largest of the scaled primal residual, dual residual and duality gap
  /// at the last interior-point iterate.
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
};

struct QpOptions {
  double tolerance = 1e-11;
  std::size_t max_iterations = 200;
};

/// Solves the QP restricted to `constraints` with a primal-dual
/// interior-point method. The first `unary_count` weight coordinates are
/// free, the rest are constrained to be >= 0.
QpState qp_solve(const std::vector<ConstraintRecord>& constraints, double C,
                 std::size_t sample_count, std::size_t unary_count,
                 std::size_t pairwise_count, const QpOptions& opts = {});

struct SsvmOptions {
  double C = 1000.0;
  double tolerance = 1e-4;
  std::size_t max_iterations = 200;
  QpOptions qp;
};

struct SsvmSample {
  PotentialStack stack;
  LabelMask truth;
};

struct SsvmResult {
  ModelWeights weights;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<ConstraintRecord> constraints;
  std::vector<double> slacks;
  /// QP optimum after every cutting-plane iteration.
  std::vector<double> objective_trace;
  double final_kkt_residual = 0.0;
};

using SsvmProgress = std::function<void(std::size_t iteration, std::size_t added, double objective)>;

SsvmResult train_ssvm(const std::vector<SsvmSample>& dataset, const SsvmOptions& opts,
                      const SsvmProgress& progress = {});

}  // namespace massseg
