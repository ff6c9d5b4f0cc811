#include "nnf/simd/kernels.hpp"

#include <cmath>

namespace nnf::simd {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_ref(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double abs_sum_ref(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i]);
  return acc;
}

double sum_squares_ref(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sum_sq_dev_ref(const double* x, std::size_t n, double c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - c;
    acc += d * d;
  }
  return acc;
}

void axpy_ref(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void rotate_ref(double* x, double* y, double c, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

const KernelTable kScalar{Isa::scalar, dot_ref,    sum_ref,   abs_sum_ref,
                          sum_squares_ref, sum_sq_dev_ref, axpy_ref, rotate_ref};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace nnf::simd
