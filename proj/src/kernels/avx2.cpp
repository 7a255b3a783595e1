// Compiled with -mavx2 only (no -mfma): lanes must round like the scalar path.
#include "massseg/kernels.hpp"

#include <immintrin.h>

namespace massseg::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

void affine_cols_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept {
  std::size_t j = 0;
  // Four accumulators of four lanes each: 16 output columns per block.
  for (; j + 16 <= cols; j += 16) {
    __m256d a0 = _mm256_loadu_pd(bias + j);
    __m256d a1 = _mm256_loadu_pd(bias + j + 4);
    __m256d a2 = _mm256_loadu_pd(bias + j + 8);
    __m256d a3 = _mm256_loadu_pd(bias + j + 12);
    for (std::size_t i = 0; i < rows; ++i) {
      const __m256d xi = _mm256_set1_pd(x[i]);
      const double* row = m + i * cols + j;
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(row), xi));
      a1 = _mm256_add_pd(a1, _mm256_mul_pd(_mm256_loadu_pd(row + 4), xi));
      a2 = _mm256_add_pd(a2, _mm256_mul_pd(_mm256_loadu_pd(row + 8), xi));
      a3 = _mm256_add_pd(a3, _mm256_mul_pd(_mm256_loadu_pd(row + 12), xi));
    }
    _mm256_storeu_pd(out + j, a0);
    _mm256_storeu_pd(out + j + 4, a1);
    _mm256_storeu_pd(out + j + 8, a2);
    _mm256_storeu_pd(out + j + 12, a3);
  }
  for (; j + 4 <= cols; j += 4) {
    __m256d a = _mm256_loadu_pd(bias + j);
    for (std::size_t i = 0; i < rows; ++i) {
      a = _mm256_add_pd(a, _mm256_mul_pd(_mm256_loadu_pd(m + i * cols + j),
                                         _mm256_set1_pd(x[i])));
    }
    _mm256_storeu_pd(out + j, a);
  }
  for (; j < cols; ++j) {
    double a = bias[j];
    for (std::size_t i = 0; i < rows; ++i) a = a + m[i * cols + j] * x[i];
    out[j] = a;
  }
}

void affine_rows_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m + i * cols;
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) {
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(x + j)));
      a1 = _mm256_add_pd(a1, _mm256_mul_pd(_mm256_loadu_pd(row + j + 4),
                                           _mm256_loadu_pd(x + j + 4)));
    }
    double acc = hsum(_mm256_add_pd(a0, a1));
    for (; j < cols; ++j) acc += row[j] * x[j];
    out[i] = bias[i] + acc;
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(a, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace massseg::kernels::detail
