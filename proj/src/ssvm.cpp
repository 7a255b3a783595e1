#include "massseg/ssvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "massseg/maxflow.hpp"

namespace massseg {

std::size_t hamming(const LabelMask& a, const LabelMask& b) {
  if (!(a.lattice() == b.lattice())) throw std::invalid_argument("hamming: lattice size mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]);
  return d;
}

ViolatedConstraint most_violated(const PotentialStack& stack, const ModelWeights& w,
                                 const LabelMask& gt) {
  ViolatedConstraint out{infer_loss_augmented(stack, w, gt), 0.0};
  const auto flat = w.flat();
  const double margin = dot(flat, joint_features(out.labeling, stack)) -
                        dot(flat, joint_features(gt, stack));
  out.violation = static_cast<double>(hamming(gt, out.labeling)) - margin;
  return out;
}

namespace {

// Primal-dual interior-point solver for
//   min 0.5 |w|^2 + box * sum(xi)
//   s.t. d_c . w + xi_n(c) >= L_c,  xi >= 0,  w_p >= 0 (pairwise coordinates).
// Inequality rows are ordered constraints, then xi, then pairwise weights.
// The Newton system has an arrow shape: the xi block is diagonal and is
// eliminated, leaving a dense D x D system that is factored by Cholesky.
class InteriorPoint {
 public:
  InteriorPoint(const std::vector<ConstraintRecord>& cons, double box, std::size_t samples,
                std::size_t unary_count, std::size_t dim)
      : cons_(cons), box_(box), n_(samples), k_(unary_count), d_(dim),
        m_(cons.size() + samples + (dim - unary_count)) {
    for (const auto& c : cons) {
      if (c.sample >= samples) throw std::invalid_argument("qp_solve: sample index out of range");
      if (c.feature_diff.size() != dim) throw std::invalid_argument("qp_solve: feature size mismatch");
      if (!(c.loss >= 0.0)) throw std::invalid_argument("qp_solve: negative loss");
    }
  }

  QpState solve(const QpOptions& opts) {
    QpState st;
    w_.assign(d_, 0.0);
    xi_.assign(n_, 1.0);
    double h_scale = 1.0;
    for (const auto& c : cons_) {
      xi_[c.sample] = std::max(xi_[c.sample], c.loss + 1.0);
      h_scale = std::max(h_scale, 1.0 + c.loss);
    }
    if (cons_.empty()) {
      finish(st, 0.0);
      return st;
    }
    s_ = rows();
    for (double& v : s_) v = std::max(v, 1.0);
    z_.assign(m_, 1.0);

    // Rounding limits how far the residuals can fall, so the best iterate
    // is kept and, once it is accurate, the loop stops when it no longer
    // improves.
    struct Iterate {
      std::vector<double> w, xi, z;
    } best;
    double best_residual = std::numeric_limits<double>::infinity();
    std::size_t stalled = 0;
    for (st.iterations = 0; st.iterations < opts.max_iterations; ++st.iterations) {
      const double rd_scale = compute_residuals();
      const double mu = dot(s_, z_) / static_cast<double>(m_);
      const double rp = max_abs(rp_) / h_scale;
      const double rd = max_abs(rd_) / rd_scale;
      const double gap = mu * static_cast<double>(m_) / (1.0 + std::abs(primal_value()));
      const double residual = std::max({rp, rd, gap});
      if (!std::isfinite(residual)) break;
      if (residual < best_residual) {
        stalled = 0;
        best_residual = residual;
        best = {w_, xi_, z_};
      } else {
        ++stalled;
      }
      if (residual <= opts.tolerance || (stalled >= 5 && best_residual <= 1e-6)) break;

      std::vector<double> rc(m_);
      for (std::size_t i = 0; i < m_; ++i) rc[i] = s_[i] * z_[i];
      factor();
      Step aff = newton(rc);
      const double a_aff = max_step(aff);
      double mu_aff = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        mu_aff += (s_[i] + a_aff * aff.ds[i]) * (z_[i] + a_aff * aff.dz[i]);
      }
      mu_aff /= static_cast<double>(m_);
      const double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
      for (std::size_t i = 0; i < m_; ++i) rc[i] += aff.ds[i] * aff.dz[i] - sigma * mu;
      Step step = newton(rc);
      const double alpha = std::min(1.0, 0.99 * max_step(step));
      if (!(alpha > 0.0)) break;
      for (std::size_t j = 0; j < d_; ++j) w_[j] += alpha * step.dw[j];
      for (std::size_t n = 0; n < n_; ++n) xi_[n] += alpha * step.dxi[n];
      for (std::size_t i = 0; i < m_; ++i) {
        s_[i] += alpha * step.ds[i];
        z_[i] += alpha * step.dz[i];
      }
    }
    w_ = std::move(best.w);
    xi_ = std::move(best.xi);
    z_ = std::move(best.z);
    finish(st, best_residual);
    return st;
  }

 private:
  struct Step {
    std::vector<double> dw, dxi, ds, dz;
  };

  static double max_abs(const std::vector<double>& v) {
    double r = 0.0;
    for (double x : v) r = std::max(r, std::abs(x));
    return r;
  }

  double primal_value() const {
    double v = 0.5 * dot(w_, w_);
    for (double x : xi_) v += box_ * x;
    return v;
  }

  // G x - h for the current iterate.
  std::vector<double> rows() const { return rows_of(w_, xi_, true); }

  std::vector<double> rows_of(const std::vector<double>& w, const std::vector<double>& xi,
                              bool subtract_h) const {
    std::vector<double> g(m_);
    const std::size_t M = cons_.size();
    for (std::size_t c = 0; c < M; ++c) {
      g[c] = dot(cons_[c].feature_diff, w) + xi[cons_[c].sample] -
             (subtract_h ? cons_[c].loss : 0.0);
    }
    for (std::size_t n = 0; n < n_; ++n) g[M + n] = xi[n];
    for (std::size_t p = k_; p < d_; ++p) g[M + n_ + (p - k_)] = w[p];
    return g;
  }

  // G' v, split into the w and xi parts.
  void transpose_apply(const std::vector<double>& v, std::vector<double>& gw,
                       std::vector<double>& gxi) const {
    const std::size_t M = cons_.size();
    gw.assign(d_, 0.0);
    gxi.assign(n_, 0.0);
    for (std::size_t c = 0; c < M; ++c) {
      const auto& f = cons_[c].feature_diff;
      for (std::size_t j = 0; j < d_; ++j) gw[j] += f[j] * v[c];
      gxi[cons_[c].sample] += v[c];
    }
    for (std::size_t n = 0; n < n_; ++n) gxi[n] += v[M + n];
    for (std::size_t p = k_; p < d_; ++p) gw[p] += v[M + n_ + (p - k_)];
  }

  // Returns the scale of the dual residual: the largest magnitude among
  // the terms that cancel in it.
  double compute_residuals() {
    rp_ = rows();
    for (std::size_t i = 0; i < m_; ++i) rp_[i] -= s_[i];
    std::vector<double> gw, gxi;
    transpose_apply(z_, gw, gxi);
    rd_.assign(d_ + n_, 0.0);
    for (std::size_t j = 0; j < d_; ++j) rd_[j] = w_[j] - gw[j];
    for (std::size_t n = 0; n < n_; ++n) rd_[d_ + n] = box_ - gxi[n];
    std::vector<double> mag(d_, 0.0);
    for (std::size_t c = 0; c < cons_.size(); ++c) {
      for (std::size_t j = 0; j < d_; ++j) mag[j] += std::abs(cons_[c].feature_diff[j]) * z_[c];
    }
    return 1.0 + std::max({box_, max_abs(w_), max_abs(mag)});
  }

  // Builds and factors the reduced matrix for the current scaling z/s.
  // Per sample, the eliminated xi block contributes a weighted scatter
  // about the weighted mean plus a rank-one term. Both are PSD, which
  // avoids the cancellation of forming the complement directly.
  void factor() {
    const std::size_t M = cons_.size();
    scale_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) scale_[i] = z_[i] / s_[i];
    diag_.assign(n_, 0.0);
    coupling_.assign(n_, std::vector<double>(d_, 0.0));
    chol_.assign(d_ * d_, 0.0);
    for (std::size_t j = 0; j < d_; ++j) chol_[j * d_ + j] = 1.0;
    for (std::size_t c = 0; c < M; ++c) {
      const double sc = scale_[c];
      auto& b = coupling_[cons_[c].sample];
      for (std::size_t i = 0; i < d_; ++i) b[i] += sc * cons_[c].feature_diff[i];
      diag_[cons_[c].sample] += sc;
    }
    std::vector<std::vector<double>> mean(n_, std::vector<double>(d_, 0.0));
    for (std::size_t n = 0; n < n_; ++n) {
      const double t = diag_[n];
      const double wxi = scale_[M + n];
      diag_[n] += wxi;
      if (t <= 0.0) continue;
      for (std::size_t i = 0; i < d_; ++i) mean[n][i] = coupling_[n][i] / t;
      const double r = t * wxi / diag_[n];
      for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) chol_[i * d_ + j] += r * mean[n][i] * mean[n][j];
      }
    }
    std::vector<double> dev(d_);
    for (std::size_t c = 0; c < M; ++c) {
      const auto& m = mean[cons_[c].sample];
      const double sc = scale_[c];
      for (std::size_t i = 0; i < d_; ++i) dev[i] = cons_[c].feature_diff[i] - m[i];
      for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) chol_[i * d_ + j] += sc * dev[i] * dev[j];
      }
    }
    for (std::size_t p = k_; p < d_; ++p) chol_[p * d_ + p] += scale_[M + n_ + (p - k_)];
    double largest = 0.0;
    for (std::size_t j = 0; j < d_; ++j) largest = std::max(largest, chol_[j * d_ + j]);
    const double pivot_floor = 1e-14 * largest;
    for (std::size_t j = 0; j < d_; ++j) {
      double v = chol_[j * d_ + j];
      for (std::size_t k = 0; k < j; ++k) v -= chol_[j * d_ + k] * chol_[j * d_ + k];
      // Late iterates make the system nearly singular along directions
      // pinned by active constraints. A pivot lost to rounding freezes that
      // direction for this step instead of aborting.
      if (!(v > pivot_floor)) v = 1e128;
      const double l = std::sqrt(v);
      chol_[j * d_ + j] = l;
      for (std::size_t i = j + 1; i < d_; ++i) {
        double u = chol_[i * d_ + j];
        for (std::size_t k = 0; k < j; ++k) u -= chol_[i * d_ + k] * chol_[j * d_ + k];
        chol_[i * d_ + j] = u / l;
      }
    }
  }

  Step newton(const std::vector<double>& rc) const {
    // Right-hand side: -r_d - G' (W r_p + S^-1 r_c).
    std::vector<double> t(m_);
    for (std::size_t i = 0; i < m_; ++i) t[i] = scale_[i] * rp_[i] + rc[i] / s_[i];
    std::vector<double> gw, gxi;
    transpose_apply(t, gw, gxi);
    std::vector<double> rw(d_), rxi(n_);
    for (std::size_t j = 0; j < d_; ++j) rw[j] = -rd_[j] - gw[j];
    for (std::size_t n = 0; n < n_; ++n) rxi[n] = -rd_[d_ + n] - gxi[n];

    Step st;
    st.dw = rw;
    for (std::size_t n = 0; n < n_; ++n) {
      const double r = rxi[n] / diag_[n];
      for (std::size_t j = 0; j < d_; ++j) st.dw[j] -= coupling_[n][j] * r;
    }
    for (std::size_t i = 0; i < d_; ++i) {
      for (std::size_t k = 0; k < i; ++k) st.dw[i] -= chol_[i * d_ + k] * st.dw[k];
      st.dw[i] /= chol_[i * d_ + i];
    }
    for (std::size_t i = d_; i-- > 0;) {
      for (std::size_t k = i + 1; k < d_; ++k) st.dw[i] -= chol_[k * d_ + i] * st.dw[k];
      st.dw[i] /= chol_[i * d_ + i];
    }
    st.dxi.resize(n_);
    for (std::size_t n = 0; n < n_; ++n) {
      st.dxi[n] = (rxi[n] - dot(coupling_[n], st.dw)) / diag_[n];
    }
    st.ds = rows_of(st.dw, st.dxi, false);
    st.dz.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      st.ds[i] += rp_[i];
      st.dz[i] = -(rc[i] + z_[i] * st.ds[i]) / s_[i];
    }
    return st;
  }

  double max_step(const Step& st) const {
    double a = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m_; ++i) {
      if (st.ds[i] < 0.0) a = std::min(a, -s_[i] / st.ds[i]);
      if (st.dz[i] < 0.0) a = std::min(a, -z_[i] / st.dz[i]);
    }
    return std::min(a, 1.0);
  }

  void finish(QpState& st, double residual) const {
    std::vector<double> w = w_;
    for (std::size_t p = k_; p < d_; ++p) w[p] = std::max(w[p], 0.0);
    st.weights = ModelWeights::from_flat(w, k_);
    st.slacks.assign(n_, 0.0);
    double dual = 0.0;
    st.duals.assign(cons_.size(), 0.0);
    for (std::size_t c = 0; c < cons_.size(); ++c) {
      auto& xi = st.slacks[cons_[c].sample];
      xi = std::max(xi, cons_[c].loss - dot(cons_[c].feature_diff, w));
      if (!z_.empty()) st.duals[c] = z_[c];
      dual += st.duals[c] * cons_[c].loss;
    }
    const double half_norm = 0.5 * dot(w, w);
    double slack_sum = 0.0;
    for (double xi : st.slacks) slack_sum += xi;
    st.objective = half_norm + box_ * slack_sum;
    st.dual_objective = dual - half_norm;
    st.kkt_residual = residual;
  }

  const std::vector<ConstraintRecord>& cons_;
  double box_;
  std::size_t n_, k_, d_, m_;
  std::vector<double> w_, xi_, s_, z_, rp_, rd_;
  std::vector<double> scale_, diag_, chol_;
  std::vector<std::vector<double>> coupling_;
};

}  // namespace

QpState qp_solve(const std::vector<ConstraintRecord>& constraints, double C,
                 std::size_t sample_count, std::size_t unary_count,
                 std::size_t pairwise_count, const QpOptions& opts) {
  if (!(C >= 0.0) || !std::isfinite(C)) throw std::invalid_argument("qp_solve: C must be >= 0");
  if (sample_count == 0) throw std::invalid_argument("qp_solve: no samples");
  const double box = C / static_cast<double>(sample_count);
  InteriorPoint solver(constraints, box, sample_count, unary_count, unary_count + pairwise_count);
  return solver.solve(opts);
}

SsvmResult train_ssvm(const std::vector<SsvmSample>& dataset, const SsvmOptions& opts,
                      const SsvmProgress& progress) {
  if (dataset.empty()) throw std::invalid_argument("train_ssvm: empty dataset");
  if (!(opts.C >= 0.0)) throw std::invalid_argument("train_ssvm: C must be >= 0");
  if (!(opts.tolerance > 0.0)) throw std::invalid_argument("train_ssvm: tolerance must be > 0");
  const std::size_t K = dataset.front().stack.unary_count();
  const std::size_t L = dataset.front().stack.pairwise_count();
  const std::size_t N = dataset.size();
  for (const auto& s : dataset) {
    if (s.stack.unary_count() != K || s.stack.pairwise_count() != L) {
      throw std::invalid_argument("train_ssvm: inconsistent potential sets");
    }
    if (!(s.stack.lattice == s.truth.lattice())) {
      throw std::invalid_argument("train_ssvm: lattice size mismatch");
    }
  }

  std::vector<std::vector<double>> truth_features;
  truth_features.reserve(N);
  for (const auto& s : dataset) truth_features.push_back(joint_features(s.truth, s.stack));

  SsvmResult result;
  QpState qp = qp_solve(result.constraints, opts.C, N, K, L, opts.qp);
  result.weights = qp.weights;
  result.slacks = qp.slacks;

  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    std::size_t added = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const auto& s = dataset[n];
      const auto mv = most_violated(s.stack, result.weights, s.truth);
      if (mv.violation > result.slacks[n] + opts.tolerance) {
        ConstraintRecord rec;
        rec.sample = n;
        rec.feature_diff = joint_features(mv.labeling, s.stack);
        for (std::size_t d = 0; d < rec.feature_diff.size(); ++d) {
          rec.feature_diff[d] -= truth_features[n][d];
        }
        rec.loss = static_cast<double>(hamming(s.truth, mv.labeling));
        result.constraints.push_back(std::move(rec));
        ++added;
      }
    }
    result.iterations = iter + 1;
    if (added == 0) {
      result.converged = true;
      break;
    }
    qp = qp_solve(result.constraints, opts.C, N, K, L, opts.qp);
    result.weights = qp.weights;
    result.slacks = qp.slacks;
    result.final_kkt_residual = qp.kkt_residual;
    result.objective_trace.push_back(qp.objective);
    if (progress) progress(result.iterations, added, qp.objective);
  }
  return result;
}

}  // namespace massseg
