#include "massseg/kernels.hpp"

#include <arm_neon.h>

namespace massseg::kernels::detail {

void affine_cols_neon(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept {
  std::size_t j = 0;
  for (; j + 8 <= cols; j += 8) {
    float64x2_t a0 = vld1q_f64(bias + j);
    float64x2_t a1 = vld1q_f64(bias + j + 2);
    float64x2_t a2 = vld1q_f64(bias + j + 4);
    float64x2_t a3 = vld1q_f64(bias + j + 6);
    for (std::size_t i = 0; i < rows; ++i) {
      const float64x2_t xi = vdupq_n_f64(x[i]);
      const double* row = m + i * cols + j;
      // vmulq + vaddq, not vfmaq: rounding must match the scalar path.
      a0 = vaddq_f64(a0, vmulq_f64(vld1q_f64(row), xi));
      a1 = vaddq_f64(a1, vmulq_f64(vld1q_f64(row + 2), xi));
      a2 = vaddq_f64(a2, vmulq_f64(vld1q_f64(row + 4), xi));
      a3 = vaddq_f64(a3, vmulq_f64(vld1q_f64(row + 6), xi));
    }
    vst1q_f64(out + j, a0);
    vst1q_f64(out + j + 2, a1);
    vst1q_f64(out + j + 4, a2);
    vst1q_f64(out + j + 6, a3);
  }
  for (; j < cols; ++j) {
    double a = bias[j];
    for (std::size_t i = 0; i < rows; ++i) a = a + m[i * cols + j] * x[i];
    out[j] = a;
  }
}

void affine_rows_neon(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m + i * cols;
    float64x2_t a0 = vdupq_n_f64(0.0);
    float64x2_t a1 = vdupq_n_f64(0.0);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      a0 = vaddq_f64(a0, vmulq_f64(vld1q_f64(row + j), vld1q_f64(x + j)));
      a1 = vaddq_f64(a1, vmulq_f64(vld1q_f64(row + j + 2), vld1q_f64(x + j + 2)));
    }
    double acc = vaddvq_f64(vaddq_f64(a0, a1));
    for (; j < cols; ++j) acc += row[j] * x[j];
    out[i] = bias[i] + acc;
  }
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(a, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace massseg::kernels::detail
