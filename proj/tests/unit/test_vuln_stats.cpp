#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nnf/error.hpp"
#include "nnf/random.hpp"
#include "nnf/vuln_stats.hpp"

using namespace nnf;

namespace {

std::vector<double> spread(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(k);
  return idx;
}

}  // namespace

TEST_CASE("ace z-score worked example and guard") {
  const AceResult r = ace_zscore(12, 20, 5, 20);
  CHECK(r.p == 0.6);
  CHECK(r.p_prime == 0.25);
  CHECK(r.pooled == doctest::Approx(0.425).epsilon(1e-15));
  // 0.35 / sqrt(0.425 * 0.575 * 0.1)
  CHECK(std::abs(r.z - 2.2389) <= 1e-4);
  CHECK(r.valid);
  CHECK_FALSE(ace_zscore(12, 20, 2, 20).valid);
  CHECK_FALSE(ace_zscore(16, 20, 5, 20).valid);  // n - m = 4
  CHECK(ace_zscore(7, 20, 7, 20).z == 0.0);
  CHECK(ace_zscore(5, 20, 12, 20).z == -r.z);
  CHECK_THROWS_AS(ace_zscore(0, 10, 0, 10), Error);
  CHECK_THROWS_AS(ace_zscore(10, 10, 10, 10), Error);
}

TEST_CASE("overlap index") {
  CHECK(overlap_index({0, 2}, {0, 2}) == 1.0);
  CHECK(overlap_index({0, 1}, {2, 3}) == 0.0);
  CHECK(overlap_index({0, 2}, {1, 3}) == 0.5);
  CHECK(overlap_index({0, 4}, {1, 2}) == 2.0 / 5.0);
  CHECK(overlap_index({1, 1}, {1, 1}) == 1.0);
  CHECK(overlap_index({1, 1}, {2, 2}) == 0.0);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    const Box x{std::min(a, b), std::max(a, b)}, y{std::min(c, d), std::max(c, d)};
    CHECK(overlap_index(x, y) == overlap_index(y, x));
    CHECK((overlap_index(x, y) >= 0.0 && overlap_index(x, y) <= 1.0));
  }
  CHECK_THROWS_AS(overlap_index({2, 1}, {0, 1}), Error);
}

TEST_CASE("flipping and outlier tags") {
  CHECK(flipping_outlier_classify(std::vector<double>{0.7}, 0)[0].flipping);
  CHECK(flipping_outlier_classify(std::vector<double>{0.5}, 0)[0].flipping);
  CHECK(flipping_outlier_classify(std::vector<double>{0.5}, 1)[0].flipping);
  const auto p = flipping_outlier_classify(std::vector<double>{0.9}, 1)[0];
  CHECK_FALSE(p.flipping);
  CHECK_FALSE(p.outlier);

  // Mean 0, Q1 -1, Q3 1: fences at +/-3.
  const std::vector<double> d{-4, -1, -1, -1, -1, 1, 1, 1, 1, 4};
  const auto clean = flipping_outlier_classify(d, 0);
  CHECK(clean.back().outlier);
  CHECK_FALSE(clean.front().outlier);  // toward the right answer
  const auto poisoned = flipping_outlier_classify(d, 1);
  CHECK(poisoned.front().outlier);
  CHECK_FALSE(poisoned.back().outlier);
  for (std::size_t i = 1; i + 1 < d.size(); ++i) CHECK_FALSE(clean[i].outlier);
}

TEST_CASE("nv candidates") {
  DetectorOutputs o;
  o.model_ids = {"a", "b", "c", "d"};
  o.detector_ids = {"x", "y"};
  o.values = {{0.9, 0.9}, {0.1, 0.1}, {0.9, 0.9}, {0.1, 0.6}};
  o.truth = {0, 0, 1, 0};
  CHECK(nv_candidates(o) == std::vector<std::string>{"a", "d"});
}

TEST_CASE("sobol indices of an additive model") {
  SobolConfig cfg;
  cfg.n_base = 1 << 14;
  cfg.seed = 3;
  const std::vector<std::pair<double, double>> unit{{0, 1}, {0, 1}};
  const auto s = sobol_indices([](std::span<const double> x) { return x[0] + 2 * x[1]; }, unit, cfg);
  // Var X1 = 1/12, Var 2 X2 = 4/12.
  CHECK(std::abs(s[0].s1 - 0.2) <= 0.05);
  CHECK(std::abs(s[1].s1 - 0.8) <= 0.05);
  CHECK(std::abs(s[0].st - 0.2) <= 0.05);
  CHECK(std::abs(s[1].st - 0.8) <= 0.05);
  CHECK(s[0].s1 + s[1].s1 <= 1.0 + s[0].ci1 + s[1].ci1);
  for (const auto& i : s) {
    CHECK(i.st >= i.s1 - i.ci1 - i.cit);
    CHECK(i.ci1 > 0.0);
  }

  const auto one = sobol_indices([](std::span<const double> x) { return x[0]; }, unit, cfg);
  CHECK(std::abs(one[0].s1 - 1.0) <= 0.02);
  CHECK(std::abs(one[1].s1) <= 0.02);
  CHECK(std::abs(one[1].st) <= 0.02);

  cfg.threads = 3;
  const auto par = sobol_indices([](std::span<const double> x) { return x[0] + 2 * x[1]; }, unit, cfg);
  CHECK(par[1].s1 == s[1].s1);
  CHECK(par[1].ci1 == s[1].ci1);

  cfg.n_base = 64;
  try {
    sobol_indices([](std::span<const double>) { return 1.0; }, unit, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
  cfg.n_base = 100;
  CHECK_THROWS_AS(sobol_indices([](std::span<const double> x) { return x[0]; }, unit, cfg), Error);
}

TEST_CASE("subset test: degenerate, extreme and stable") {
  SubsetTestConfig cfg;
  cfg.n_mc = 500;
  cfg.seed = 9;
  const std::vector<std::size_t> sub{0, 1, 2, 3, 4};

  const std::vector<double> flat(40, 3.0);
  const SubsetTestResult d = mc_subset_test(flat, sub, cfg);
  CHECK(d.percentile == 50.0);
  CHECK_FALSE(d.significant);

  std::vector<double> v = spread(60, 4);
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  const std::vector<std::size_t> top(order.begin(), order.begin() + 8);
  const SubsetTestResult e = mc_subset_test(v, top, cfg);
  CHECK(e.percentile > 95.0);
  CHECK(e.significant);
  CHECK(e.null_distances.size() == 500);

  // Same seed, same answer; reordering the population with the subset
  // carried along changes nothing.
  CHECK(mc_subset_test(v, top, cfg).percentile == e.percentile);
  Rng rng(2);
  std::vector<std::size_t> perm(v.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<double> w(v.size());
  std::vector<std::size_t> where(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[perm[i]], where[perm[i]] = i;
  std::vector<std::size_t> moved;
  for (auto i : top) moved.push_back(where[i]);
  const SubsetTestResult m = mc_subset_test(w, moved, cfg);
  CHECK(m.percentile == e.percentile);
  CHECK(m.subset_avg_distance == e.subset_avg_distance);

  cfg.threads = 4;
  CHECK(mc_subset_test(v, top, cfg).null_distances == e.null_distances);

  CHECK_THROWS_AS(mc_subset_test(v, std::vector<std::size_t>{}, cfg), Error);
  std::vector<std::size_t> everything(v.size());
  std::iota(everything.begin(), everything.end(), 0);
  CHECK_THROWS_AS(mc_subset_test(v, everything, cfg), Error);
}

TEST_CASE("subset test: exact mode") {
  SubsetTestConfig cfg;
  cfg.n_mc = 60;
  cfg.pool = 0;
  const std::vector<double> v = spread(30, 1);
  const SubsetTestResult r = mc_subset_test(v, std::vector<std::size_t>{0, 1, 2}, cfg);
  CHECK((r.percentile >= 0.0 && r.percentile <= 100.0));
}

TEST_CASE("subset test: categorical values") {
  std::vector<std::string> cats;
  for (int i = 0; i < 60; ++i) cats.push_back(i % 3 == 0 ? "a" : i % 3 == 1 ? "b" : "c");
  SubsetTestConfig cfg;
  cfg.n_mc = 500;
  std::vector<std::size_t> all_a;
  for (std::size_t i = 0; i < 60; i += 3) all_a.push_back(i);
  all_a.resize(10);
  CHECK(mc_subset_test(cats, all_a, cfg).significant);
  const SubsetTestResult mixed = mc_subset_test(cats, std::vector<std::size_t>{0, 1, 2, 3, 4, 5}, cfg);
  CHECK_FALSE(mixed.significant);
}

TEST_CASE("subset test: random subsets are flagged at the nominal rate") {
  const std::vector<double> v = spread(80, 12);
  Rng rng(5);
  int flagged = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    SubsetTestConfig cfg;
    cfg.n_mc = 400;
    cfg.seed = static_cast<std::uint64_t>(t);
    flagged += mc_subset_test(v, random_subset(v.size(), 10, rng), cfg).significant;
  }
  // Binomial(100, 0.05): mean 5, sd 2.2.
  CHECK(flagged <= 12);
}
