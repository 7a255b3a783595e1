// Runtime selection of kernel variants. No intrinsics in this file.
#include "massseg/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace massseg::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(MASSSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* forced = std::getenv("MASSSEG_SIMD"); forced && std::strcmp(forced, "scalar") == 0) {
    return Isa::scalar;
  }
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

[[noreturn]] void unavailable(Isa isa) {
  std::fprintf(stderr, "massseg: kernel variant %s is not available\n", isa_name(isa).data());
  std::abort();
}

void check_sizes(std::size_t m, std::size_t rows, std::size_t cols, std::size_t x,
                 std::size_t bias, std::size_t out) {
  if (m != rows * cols || x != rows || bias != cols || out != cols) {
    throw std::invalid_argument("kernels: dimension mismatch");
  }
}

}  // namespace

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return cpu_has_avx2();
    case Isa::neon:
#if defined(MASSSEG_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept {
  static const Isa isa = detect();
  return isa;
}

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

void affine_cols(Isa isa, const double* m, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out) {
  switch (isa) {
    case Isa::scalar:
      return detail::affine_cols_scalar(m, rows, cols, x, bias, out);
    case Isa::avx2:
#if defined(MASSSEG_HAVE_AVX2)
      if (cpu_has_avx2()) return detail::affine_cols_avx2(m, rows, cols, x, bias, out);
#endif
      break;
    case Isa::neon:
#if defined(MASSSEG_HAVE_NEON)
      return detail::affine_cols_neon(m, rows, cols, x, bias, out);
#endif
      break;
  }
  unavailable(isa);
}

void affine_rows(Isa isa, const double* m, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out) {
  switch (isa) {
    case Isa::scalar:
      return detail::affine_rows_scalar(m, rows, cols, x, bias, out);
    case Isa::avx2:
#if defined(MASSSEG_HAVE_AVX2)
      if (cpu_has_avx2()) return detail::affine_rows_avx2(m, rows, cols, x, bias, out);
#endif
      break;
    case Isa::neon:
#if defined(MASSSEG_HAVE_NEON)
      return detail::affine_rows_neon(m, rows, cols, x, bias, out);
#endif
      break;
  }
  unavailable(isa);
}

void axpy(Isa isa, double alpha, const double* x, double* y, std::size_t n) {
  switch (isa) {
    case Isa::scalar:
      return detail::axpy_scalar(alpha, x, y, n);
    case Isa::avx2:
#if defined(MASSSEG_HAVE_AVX2)
      if (cpu_has_avx2()) return detail::axpy_avx2(alpha, x, y, n);
#endif
      break;
    case Isa::neon:
#if defined(MASSSEG_HAVE_NEON)
      return detail::axpy_neon(alpha, x, y, n);
#endif
      break;
  }
  unavailable(isa);
}

void affine_cols(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> bias, std::span<double> out) {
  check_sizes(m.size(), rows, cols, x.size(), bias.size(), out.size());
  affine_cols(active_isa(), m.data(), rows, cols, x.data(), bias.data(), out.data());
}

void affine_rows(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> bias, std::span<double> out) {
  // Transposed roles: x spans the columns, out spans the rows.
  check_sizes(m.size(), cols, rows, x.size(), bias.size(), out.size());
  affine_rows(active_isa(), m.data(), rows, cols, x.data(), bias.data(), out.data());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  axpy(active_isa(), alpha, x.data(), y.data(), x.size());
}

}  // namespace massseg::kernels
