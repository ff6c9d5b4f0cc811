#pragma once
// Deterministic numeric kernels shared by the feature, metric, ensemble and
// statistics modules. All functions are pure.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace nnf {

// Dense row-major f64 matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  Matrix transposed() const;
  bool operator==(const Matrix&) const = default;
};

struct SvdResult {
  std::vector<double> singular_values;  // descending, length min(rows, cols)
  Matrix left;                          // rows x k, orthonormal columns
  Matrix right;                         // cols x k, orthonormal columns
  int sweeps = 0;
};

// One-sided Jacobi SVD (relative tolerance 1e-12, at most 60 sweeps).
SvdResult svd(const Matrix& m);
// Singular values only; same algorithm without accumulating the right vectors.
std::vector<double> singular_values(const Matrix& m);

struct DescriptiveStats {
  double min = 0, max = 0, mean = 0, median = 0;
  double std = 0, variance = 0;
  double skewness = 0, excess_kurtosis = 0;
  // central_moments[k] is the k-th population central moment for k = 2..5.
  double central_moments[6] = {0, 0, 0, 0, 0, 0};
  // False when the sample has zero variance; skewness/kurtosis are then 0.
  bool shape_defined = true;
};

// Population (divide-by-N) conventions. Throws on empty input.
DescriptiveStats descriptive_stats(std::span<const double> xs);

double median(std::span<const double> xs);
// Linear-interpolation quantile (the usual "type 7" definition), q in [0,1].
double quantile(std::span<const double> xs, double q);

struct Histogram {
  std::vector<std::size_t> counts;
  double entropy_bits = 0.0;
};

// Equal-width bins on [lo, hi]; out-of-range values clamp to the edge bins.
Histogram histogram_entropy(std::span<const double> xs, std::size_t bins, double lo, double hi);

// Base-2 entropy of nonnegative weights normalized to sum 1; zero entries add 0.
double entropy_bits(std::span<const double> weights);

// Tie-corrected Kendall tau-b in O(n log n). nullopt when either list is
// constant (zero denominator).
std::optional<double> kendall_tau_b(std::span<const double> xs, std::span<const double> ys);

// Two-sample Kolmogorov-Smirnov statistic (sup distance between ECDFs).
double ks_distance(std::span<const double> a, std::span<const double> b);
// Same, for inputs already sorted ascending.
double ks_distance_sorted(std::span<const double> a, std::span<const double> b);

}  // namespace nnf
