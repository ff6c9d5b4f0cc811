#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "nnf/error.hpp"
#include "nnf/numerics.hpp"
#include "nnf/random.hpp"
#include "oracles.hpp"

using namespace nnf;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values) v = rng.normal();
  return m;
}

double frob(const Matrix& m) {
  double s = 0;
  for (double v : m.values) s += v * v;
  return std::sqrt(s);
}

double ks_oracle(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double best = 0;
  for (double t : pts) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= t; })) / a.size();
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= t; })) / b.size();
    best = std::max(best, std::fabs(fa - fb));
  }
  return best;
}

}  // namespace

TEST_CASE("svd worked examples") {
  CHECK(singular_values(Matrix(2, 2, {3, 0, 0, 1})) == std::vector<double>{3, 1});
  const auto s = singular_values(Matrix(2, 2, {0, 1, 1, 0}));
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-15));
  // [[1,1],[0,1]]: eigenvalues of A^T A = [[1,1],[1,2]] solve l^2 - 3l + 1 = 0.
  const auto g = singular_values(Matrix(2, 2, {1, 1, 0, 1}));
  CHECK(std::fabs(g[0] - std::sqrt((3 + std::sqrt(5.0)) / 2)) < 1e-14);
  CHECK(std::fabs(g[1] - std::sqrt((3 - std::sqrt(5.0)) / 2)) < 1e-14);
  CHECK(singular_values(Matrix(2, 3)) == std::vector<double>{0, 0});
}

TEST_CASE("svd reconstructs with orthonormal factors") {
  Rng rng(5);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 3}, {7, 4}, {4, 7}, {12, 12}, {30, 5}, {1, 9}}) {
    auto m = random_matrix(rng, r, c);
    if (r == 12) {  // rank-deficient case
      for (std::size_t i = 0; i < r; ++i) m(i, 11) = m(i, 0) + m(i, 1);
    }
    const auto res = svd(m);
    const std::size_t k = std::min(r, c);
    REQUIRE(res.singular_values.size() == k);
    CHECK(std::is_sorted(res.singular_values.rbegin(), res.singular_values.rend()));
    Matrix rec(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t q = 0; q < k; ++q) rec(i, j) += res.left(i, q) * res.singular_values[q] * res.right(j, q);
    double err = 0;
    for (std::size_t i = 0; i < rec.values.size(); ++i) err += std::pow(rec.values[i] - m.values[i], 2);
    CHECK(std::sqrt(err) <= 1e-9 * frob(m));
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = 0; q < k; ++q) {
        double uu = 0, vv = 0;
        for (std::size_t i = 0; i < r; ++i) uu += res.left(i, p) * res.left(i, q);
        for (std::size_t j = 0; j < c; ++j) vv += res.right(j, p) * res.right(j, q);
        CHECK(std::fabs(uu - (p == q)) <= 1e-9);
        CHECK(std::fabs(vv - (p == q)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("singular values are invariant under row and column permutations") {
  Rng rng(8);
  const auto m = random_matrix(rng, 6, 4);
  std::vector<std::size_t> rp{3, 0, 5, 1, 4, 2}, cp{2, 3, 0, 1};
  Matrix p(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) p(i, j) = m(rp[i], cp[j]);
  const auto a = singular_values(m), b = singular_values(p);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-9);
}

TEST_CASE("descriptive statistics") {
  const std::vector<double> xs{1, 2, 3};
  const auto s = descriptive_stats(xs);
  CHECK(s.mean == 2.0);
  CHECK(s.median == 2.0);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(s.variance == doctest::Approx(s.std * s.std).epsilon(1e-15));

  const std::vector<double> sym{-1, 0, 1};
  CHECK(std::fabs(descriptive_stats(sym).skewness) <= 1e-12);

  const std::vector<double> flat{5, 5, 5};
  const auto c = descriptive_stats(flat);
  CHECK(c.variance == 0.0);
  CHECK(c.skewness == 0.0);
  CHECK(c.excess_kurtosis == 0.0);
  CHECK_FALSE(c.shape_defined);

  const std::vector<double> one{4};
  const auto o = descriptive_stats(one);
  CHECK(o.std == 0.0);
  CHECK(o.skewness == 0.0);

  CHECK_THROWS_AS(descriptive_stats(std::vector<double>{}), Error);
  CHECK(median(std::vector<double>{4, 1, 3, 2}) == 2.5);
}

TEST_CASE("moments follow the population formulas") {
  Rng rng(3);
  std::vector<double> xs(101);
  for (auto& x : xs) x = rng.uniform(-1, 2) * rng.uniform(0, 3);
  const auto s = descriptive_stats(xs);
  double m = 0;
  for (double x : xs) m += x;
  m /= xs.size();
  double c[6] = {0, 0, 0, 0, 0, 0};
  for (double x : xs)
    for (int k = 2; k <= 5; ++k) c[k] += std::pow(x - m, k) / xs.size();
  for (int k = 2; k <= 5; ++k) CHECK(s.central_moments[k] == doctest::Approx(c[k]).epsilon(1e-12));
  CHECK(s.skewness == doctest::Approx(c[3] / std::pow(c[2], 1.5)).epsilon(1e-12));
  CHECK(s.excess_kurtosis == doctest::Approx(c[4] / (c[2] * c[2]) - 3).epsilon(1e-12));
  CHECK(s.min <= s.median);
  CHECK(s.median <= s.max);
}

TEST_CASE("histogram entropy") {
  const std::vector<double> four{0.5, 1.5, 2.5, 3.5};
  const auto h = histogram_entropy(four, 4, 0, 4);
  CHECK(h.entropy_bits == 2.0);
  CHECK(histogram_entropy(std::vector<double>{1, 1, 1}, 4, 0, 4).entropy_bits == 0.0);
  const std::vector<double> eight{0.1, 0.2, 1.1, 1.2, 2.1, 2.2, 2.3, 2.4};
  const auto e = histogram_entropy(eight, 3, 0, 3);
  CHECK(e.counts == std::vector<std::size_t>{2, 2, 4});
  CHECK(e.entropy_bits == doctest::Approx(1.5).epsilon(1e-15));
  const auto clamp = histogram_entropy(std::vector<double>{-10, 10, 4}, 4, 0, 4);
  CHECK(clamp.counts == std::vector<std::size_t>{1, 0, 0, 2});
}

TEST_CASE("kendall tau-b") {
  const std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1};
  CHECK(*kendall_tau_b(a, a) == 1.0);
  CHECK(*kendall_tau_b(a, r) == -1.0);
  CHECK(*kendall_tau_b(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 3}) ==
        doctest::Approx(0.8).epsilon(1e-15));
  CHECK_FALSE(kendall_tau_b(a, std::vector<double>{2, 2, 2, 2}).has_value());

  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.index(6));
      y[i] = static_cast<double>(rng.index(6));
    }
    const auto got = kendall_tau_b(x, y), want = oracle::tau_b(x, y);
    REQUIRE(got.has_value() == want.has_value());
    if (got) REQUIRE(*got == *want);
    if (got) {
      CHECK(*kendall_tau_b(y, x) == *got);
      std::vector<double> ex(n);
      for (std::size_t i = 0; i < n; ++i) ex[i] = std::exp(x[i]);
      CHECK(*kendall_tau_b(ex, y) == *got);
    }
  }
}

TEST_CASE("ks distance") {
  const std::vector<double> a{1, 2, 3};
  CHECK(ks_distance(a, a) == 0.0);
  CHECK(ks_distance(std::vector<double>{0, 0.5}, std::vector<double>{2, 3}) == 1.0);
  CHECK(ks_distance(a, std::vector<double>{2, 3, 4}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(ks_distance(a, std::vector<double>{}), Error);
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(1 + rng.index(15)), y(1 + rng.index(15));
    for (auto& v : x) v = static_cast<double>(rng.index(8));
    for (auto& v : y) v = static_cast<double>(rng.index(8));
    CHECK(ks_distance(x, y) == doctest::Approx(ks_oracle(x, y)).epsilon(1e-15));
  }
}

TEST_CASE("quantile interpolates linearly") {
  const std::vector<double> xs{1, 2, 3, 4};
  CHECK(quantile(xs, 0.0) == 1.0);
  CHECK(quantile(xs, 1.0) == 4.0);
  CHECK(quantile(xs, 0.25) == doctest::Approx(1.75));
  CHECK(quantile(xs, 0.5) == 2.5);
}
