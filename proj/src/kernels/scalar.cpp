#include "massseg/kernels.hpp"

namespace massseg::kernels::detail {

void affine_cols_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                        const double* bias, double* out) noexcept {
  for (std::size_t j = 0; j < cols; ++j) out[j] = bias[j];
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = x[i];
    const double* row = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] = out[j] + row[j] * xi;
  }
}

void affine_rows_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                        const double* bias, double* out) noexcept {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    out[i] = bias[i] + acc;
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace massseg::kernels::detail
