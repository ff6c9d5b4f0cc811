#pragma once
// Data-parallel f64 kernels used by the numeric modules.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) live in their own translation units and are chosen
// once per process from the CPU's capabilities. Setting NNF_SIMD=scalar in the
// environment forces the reference path.
//
// Results of the vector variants agree with the scalar reference up to
// floating-point reassociation; they are not bit-identical to it. Within one
// process the selected table never changes, so repeated runs are bit-stable.

#include <cstddef>
#include <span>
#include <string_view>

namespace nnf::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*abs_sum)(const double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // sum of (x_i - c)^2
  double (*sum_sq_dev)(const double* x, std::size_t n, double c);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // (x, y) <- (c*x - s*y, s*x + c*y)
  void (*rotate)(double* x, double* y, double c, double s, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the ISA is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table selected for this process.
const KernelTable& active();

// Testing hook: route subsequent calls through `table`. Passing nullptr restores
// the automatic choice.
void override_table(const KernelTable* table);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline double abs_sum(std::span<const double> x) { return active().abs_sum(x.data(), x.size()); }
inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}
inline double sum_sq_dev(std::span<const double> x, double c) {
  return active().sum_sq_dev(x.data(), x.size(), c);
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}
inline void rotate(std::span<double> x, std::span<double> y, double c, double s) {
  active().rotate(x.data(), y.data(), c, s, x.size() < y.size() ? x.size() : y.size());
}

}  // namespace nnf::simd
