#pragma once
// Brute-force oracles shared by unit and acceptance tests. None of them call
// the code they check.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nnf/random.hpp"
#include "nnf/tensor_store.hpp"

namespace nnf::oracle {

// P(score+ > score-) + P(tie) / 2 by counting every positive/negative pair.
inline double auc(const std::vector<int>& y, const std::vector<double>& s) {
  std::uint64_t gt = 0, tie = 0, np = 0, nn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? np : nn) += 1;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) ++gt;
      else if (s[i] == s[j]) ++tie;
    }
  }
  return static_cast<double>(2 * gt + tie) / static_cast<double>(2 * np * nn);
}

// Kendall tau-b by pair counting; empty when either side is constant.
inline std::optional<double> tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  long long conc = 0, disc = 0, tx = 0, ty = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++tx;
        ++ty;
      } else if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  }
  const long long n0 = static_cast<long long>(n * (n - 1) / 2);
  if (n0 - tx == 0 || n0 - ty == 0) return std::nullopt;
  return static_cast<double>(conc - disc) / std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
}

// LASSO on one standardized column (mean 0, population variance 1): the
// coefficient is the soft threshold of x'y/n at alpha.
inline double soft_threshold_slope(const std::vector<double>& x, const std::vector<int>& y, double alpha) {
  double xty = 0;
  for (std::size_t i = 0; i < x.size(); ++i) xty += x[i] * y[i] / static_cast<double>(x.size());
  return xty > alpha ? xty - alpha : (xty < -alpha ? xty + alpha : 0.0);
}

// Standardizes to mean 0 and population variance 1.
inline std::vector<double> standardize(std::vector<double> x) {
  double m = 0, v = 0;
  for (double xi : x) m += xi / static_cast<double>(x.size());
  for (double xi : x) v += (xi - m) * (xi - m) / static_cast<double>(x.size());
  for (double& xi : x) xi = (xi - m) / std::sqrt(v);
  return x;
}

// A container with 0..4 tensors of rank 0..3, mixed dtypes, values spanning
// sixteen decades, and optional metadata.
inline ModelContainer random_container(Rng& rng) {
  ModelContainer c;
  const auto count = rng.index(5);
  for (std::uint64_t t = 0; t < count; ++t) {
    TensorRecord r;
    r.name = "t" + std::to_string(t) + (rng.index(2) ? ".weight" : ".bias");
    r.dtype = rng.index(2) ? DType::f32 : DType::f64;
    const auto rank = rng.index(4);
    for (std::uint64_t k = 0; k < rank; ++k) r.shape.push_back(rng.index(5));
    r.data.resize(r.numel());
    for (auto& v : r.data) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
    c.add(std::move(r));
  }
  if (rng.index(2)) c.set_metadata("seed", std::to_string(rng.next()));
  if (rng.index(2)) c.set_metadata("poisoned", rng.index(2) ? "1" : "0");
  return c;
}

}  // namespace nnf::oracle
