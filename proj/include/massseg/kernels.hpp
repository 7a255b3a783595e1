#pragma once

// Dense inner loops used by RBM training and inference.
//
// Every kernel has a portable scalar reference and, where the target allows
// it, an AVX2 (x86-64) or NEON (aarch64) variant. The public entry points
// dispatch once at runtime on the detected CPU; MASSSEG_SIMD=scalar in the
// environment forces the reference path.
//
// Matrices are row-major with `rows` x `cols` doubles.
//
// affine_cols and axpy vectorize across independent output lanes without
// fused multiply-add, so every variant rounds exactly like the scalar one.
// affine_rows reassociates its reductions and matches only to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace massseg::kernels {

enum class Isa { scalar, avx2, neon };

/// Instruction set selected by the dispatcher for this process.
Isa active_isa() noexcept;
std::string_view isa_name(Isa isa) noexcept;
/// Whether `isa` can run on this CPU and was compiled in.
bool isa_available(Isa isa) noexcept;

/// out[j] = bias[j] + sum_i m[i][j] * x[i]   (x: rows, out/bias: cols)
void affine_cols(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> bias,
                 std::span<double> out);

/// out[i] = bias[i] + sum_j m[i][j] * x[j]   (x: cols, out/bias: rows)
void affine_rows(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> bias,
                 std::span<double> out);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Per-ISA entry points, used by the dispatcher and the equivalence tests.
/// Calling a variant that is not available aborts.
void affine_cols(Isa isa, const double* m, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out);
void affine_rows(Isa isa, const double* m, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out);
void axpy(Isa isa, double alpha, const double* x, double* y, std::size_t n);

namespace detail {
void affine_cols_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                        const double* bias, double* out) noexcept;
void affine_rows_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                        const double* bias, double* out) noexcept;
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept;

#if defined(MASSSEG_HAVE_AVX2)
void affine_cols_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept;
void affine_rows_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept;
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept;
#endif

#if defined(MASSSEG_HAVE_NEON)
void affine_cols_neon(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept;
void affine_rows_neon(const double* m, std::size_t rows, std::size_t cols, const double* x,
                      const double* bias, double* out) noexcept;
void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept;
#endif
}  // namespace detail

}  // namespace massseg::kernels
