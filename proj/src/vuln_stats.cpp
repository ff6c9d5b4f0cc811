#include "nnf/vuln_stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "nnf/error.hpp"
#include "nnf/numerics.hpp"
#include "nnf/parallel.hpp"
#include "nnf/random.hpp"

namespace nnf {

namespace {

// k distinct positions in [0, n) by a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw_subset(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  return idx;
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1).
double sample_std(std::span<const double> xs) {
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

void check_subset(std::size_t n, std::span<const std::size_t> subset) {
  require(!subset.empty(), ErrorKind::invalid, "subset is empty");
  require(subset.size() < n, ErrorKind::invalid, "subset must be smaller than the full set");
  std::vector<std::size_t> s(subset.begin(), subset.end());
  std::sort(s.begin(), s.end());
  require(std::adjacent_find(s.begin(), s.end()) == s.end(), ErrorKind::invalid, "subset indices repeat");
  require(s.back() < n, ErrorKind::invalid, "subset index out of range");
}

// Profile: per-subset summary; distance(a, b) between two profiles.
// Population: canonically ordered, so results ignore input order.
template <class Profile, class MakeProfile, class Distance>
SubsetTestResult run_subset_test(std::size_t n, std::size_t k, const Profile& candidate, MakeProfile make,
                                 Distance distance, const SubsetTestConfig& cfg) {
  require(cfg.n_mc >= 1, ErrorKind::invalid, "n_mc must be positive");
  require(cfg.threshold >= 0.0 && cfg.threshold <= 100.0, ErrorKind::invalid, "threshold must lie in [0,100]");
  const bool exact = cfg.pool == 0;
  std::vector<Profile> draws(cfg.n_mc);
  parallel_for(cfg.n_mc, cfg.threads,
               [&](std::size_t j) { draws[j] = make(draw_subset(n, k, derive_seed(cfg.seed, j))); });
  std::vector<Profile> pool;
  if (!exact) {
    pool.resize(cfg.pool);
    parallel_for(cfg.pool, cfg.threads,
                 [&](std::size_t p) { pool[p] = make(draw_subset(n, k, derive_seed(cfg.seed, cfg.n_mc + p))); });
  }
  const std::vector<Profile>& peers = exact ? draws : pool;

  SubsetTestResult r;
  r.null_distances.assign(cfg.n_mc, 0.0);
  parallel_for(cfg.n_mc, cfg.threads, [&](std::size_t j) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < peers.size(); ++p) {
      if (exact && p == j) continue;
      s += distance(draws[j], peers[p]);
      ++count;
    }
    r.null_distances[j] = count ? s / static_cast<double>(count) : 0.0;
  });
  double s = 0.0;
  for (const auto& p : peers) s += distance(candidate, p);
  r.subset_avg_distance = s / static_cast<double>(peers.size());

  // Mid-rank percentile: ties count half, so a constant population gives 50.
  double below = 0.0;
  for (double d : r.null_distances) below += d < r.subset_avg_distance ? 1.0 : d == r.subset_avg_distance ? 0.5 : 0.0;
  r.percentile = 100.0 * below / static_cast<double>(cfg.n_mc);
  r.significant = r.percentile > cfg.threshold;
  return r;
}

double fraction_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) d = std::max(d, std::abs(a[c] - b[c]));
  return d;
}

}  // namespace

SubsetTestResult mc_subset_test(std::span<const double> values, std::span<const std::size_t> subset,
                                const SubsetTestConfig& cfg) {
  check_subset(values.size(), subset);
  for (double v : values) require(std::isfinite(v), ErrorKind::data, "subset test values must be finite");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto make = [&](const std::vector<std::size_t>& pos) {
    std::vector<double> v;
    for (std::size_t i : pos) v.push_back(sorted[i]);
    std::sort(v.begin(), v.end());
    return v;
  };
  std::vector<double> cand;
  for (std::size_t i : subset) cand.push_back(values[i]);
  std::sort(cand.begin(), cand.end());
  auto ks = [](const std::vector<double>& a, const std::vector<double>& b) { return ks_distance_sorted(a, b); };
  return run_subset_test(values.size(), subset.size(), cand, make, ks, cfg);
}

SubsetTestResult mc_subset_test(const std::vector<std::string>& values, std::span<const std::size_t> subset,
                                const SubsetTestConfig& cfg) {
  check_subset(values.size(), subset);
  std::map<std::string, std::size_t> code;
  for (const auto& v : values) code.emplace(v, 0);
  std::size_t next = 0;
  for (auto& [name, c] : code) c = next++;
  std::vector<std::size_t> sorted;
  for (const auto& v : values) sorted.push_back(code.at(v));
  std::sort(sorted.begin(), sorted.end());

  const double inv_k = 1.0 / static_cast<double>(subset.size());
  auto make = [&](const std::vector<std::size_t>& pos) {
    std::vector<double> f(code.size(), 0.0);
    for (std::size_t i : pos) f[sorted[i]] += inv_k;
    return f;
  };
  std::vector<double> cand(code.size(), 0.0);
  for (std::size_t i : subset) cand[code.at(values[i])] += inv_k;
  return run_subset_test(values.size(), subset.size(), cand, make, fraction_distance, cfg);
}

std::vector<std::string> nv_candidates(const DetectorOutputs& outputs) {
  outputs.validate();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < outputs.models(); ++i) {
    if (outputs.truth[i] != 0) continue;
    std::size_t seen = 0, correct = 0;
    for (const auto& v : outputs.values[i]) {
      if (!v) continue;
      ++seen;
      correct += *v < 0.5;
    }
    if (seen > 0 && 2 * correct <= seen) out.push_back(outputs.model_ids[i]);
  }
  return out;
}

AceResult ace_zscore(std::size_t m, std::size_t n, std::size_t m_prime, std::size_t n_prime) {
  require(n >= 1 && n_prime >= 1, ErrorKind::invalid, "sample sizes must be positive");
  require(m <= n && m_prime <= n_prime, ErrorKind::invalid, "counts cannot exceed sample sizes");
  AceResult r;
  const double dn = static_cast<double>(n), dn2 = static_cast<double>(n_prime);
  r.p = static_cast<double>(m) / dn;
  r.p_prime = static_cast<double>(m_prime) / dn2;
  r.pooled = static_cast<double>(m + m_prime) / (dn + dn2);
  require(r.pooled > 0.0 && r.pooled < 1.0, ErrorKind::numeric, "pooled proportion is 0 or 1; z is undefined");
  r.z = (r.p - r.p_prime) / std::sqrt(r.pooled * (1.0 - r.pooled) * (1.0 / dn + 1.0 / dn2));
  r.valid = m >= 5 && m_prime >= 5 && n - m >= 5 && n_prime - m_prime >= 5;
  return r;
}

namespace {

struct SobolSums {
  double s1 = 0.0, st = 0.0;
};

// Estimates from row indices `rows` of the evaluation table.
SobolSums sobol_estimate(const std::vector<double>& fa, const std::vector<double>& fb, const std::vector<double>& fab,
                         std::span<const std::size_t> rows) {
  const double n = static_cast<double>(rows.size());
  double mean_ab = 0.0, sum_sq = 0.0, cross = 0.0, total_mean = 0.0, total_sq = 0.0, jansen = 0.0;
  for (std::size_t r : rows) {
    mean_ab += (fb[r] + fab[r]) / 2.0;
    sum_sq += (fb[r] * fb[r] + fab[r] * fab[r]) / 2.0;
    cross += fb[r] * fab[r];
    total_mean += fa[r] + fb[r];
    total_sq += fa[r] * fa[r] + fb[r] * fb[r];
    jansen += (fa[r] - fab[r]) * (fa[r] - fab[r]);
  }
  mean_ab /= n;
  total_mean /= 2.0 * n;
  const double var = total_sq / (2.0 * n) - total_mean * total_mean;
  SobolSums s;
  // Janon: correlation of f(B) with f(AB_i), which shares only X_i with B.
  const double janon_den = sum_sq / n - mean_ab * mean_ab;
  s.s1 = janon_den > 0.0 ? (cross / n - mean_ab * mean_ab) / janon_den : 0.0;
  s.st = var > 0.0 ? jansen / (2.0 * n) / var : 0.0;
  return s;
}

}  // namespace

std::vector<SobolIndex> sobol_indices(const std::function<double(std::span<const double>)>& f,
                                      const std::vector<std::pair<double, double>>& boxes, const SobolConfig& cfg) {
  const std::size_t n = cfg.n_base, k = boxes.size();
  require(n >= 64 && (n & (n - 1)) == 0, ErrorKind::invalid, "n_base must be a power of 2 and at least 64");
  require(k >= 1, ErrorKind::invalid, "at least one parameter box is required");
  for (const auto& [lo, hi] : boxes)
    require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, ErrorKind::invalid, "parameter boxes must be finite");

  // A and B are n x k, row-major.
  std::vector<double> a(n * k), b(n * k);
  Rng rng(derive_seed(cfg.seed, 0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) a[r * k + j] = rng.uniform(boxes[j].first, boxes[j].second);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) b[r * k + j] = rng.uniform(boxes[j].first, boxes[j].second);

  // Evaluation table: column 0 = A, 1 = B, 2 + i = AB_i.
  std::vector<std::vector<double>> y(k + 2, std::vector<double>(n));
  parallel_for(n * (k + 2), cfg.threads, [&](std::size_t t) {
    const std::size_t col = t / n, r = t % n;
    std::vector<double> x(k);
    for (std::size_t j = 0; j < k; ++j) {
      const bool from_b = col == 1 || (col >= 2 && col - 2 == j);
      x[j] = (from_b ? b : a)[r * k + j];
    }
    y[col][r] = f(x);
  });
  for (const auto& col : y)
    for (double v : col) require(std::isfinite(v), ErrorKind::numeric, "model output is not finite");
  {
    double lo = y[0][0], hi = y[0][0];
    for (std::size_t c = 0; c < 2; ++c)
      for (double v : y[c]) lo = std::min(lo, v), hi = std::max(hi, v);
    require(hi > lo, ErrorKind::numeric, "constant model: output variance is zero");
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<SobolIndex> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const SobolSums s = sobol_estimate(y[0], y[1], y[2 + i], all);
    out[i].s1 = s.s1;
    out[i].st = s.st;
  }
  if (cfg.bootstrap >= 2) {
    std::vector<std::vector<SobolSums>> boot(k, std::vector<SobolSums>(cfg.bootstrap));
    for (std::size_t t = 0; t < cfg.bootstrap; ++t) {
      Rng br(derive_seed(cfg.seed, 1 + t));
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = br.index(n);
      for (std::size_t i = 0; i < k; ++i) boot[i][t] = sobol_estimate(y[0], y[1], y[2 + i], rows);
    }
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> v1, vt;
      for (const auto& s : boot[i]) v1.push_back(s.s1), vt.push_back(s.st);
      out[i].ci1 = 1.96 * sample_std(v1);
      out[i].cit = 1.96 * sample_std(vt);
    }
  }
  for (auto& s : out) s.needs_more_samples = s.ci1 > 0.1 * std::abs(s.s1) || s.cit > 0.1 * std::abs(s.st);
  return out;
}

Box iqr_box(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::invalid, "box of an empty sample");
  return {quantile(xs, 0.25), quantile(xs, 0.75)};
}

double overlap_index(Box a, Box b) {
  require(a.q1 <= a.q3 && b.q1 <= b.q3, ErrorKind::invalid, "box needs q1 <= q3");
  const double la = a.q3 - a.q1, lb = b.q3 - b.q1;
  if (la == 0.0 && lb == 0.0) return a.q1 == b.q1 ? 1.0 : 0.0;
  const double ov = std::max(0.0, std::min(a.q3, b.q3) - std::max(a.q1, b.q1));
  // Ov1 = Ov2 = ov; Ov_i + Nov_i is box i's length.
  return 2.0 * ov / (la + lb);
}

std::vector<FlipTag> flipping_outlier_classify(std::span<const double> inference, int truth, double k) {
  require(truth == 0 || truth == 1, ErrorKind::invalid, "ground truth must be 0 (clean) or 1 (poisoned)");
  require(std::isfinite(k) && k >= 0.0, ErrorKind::invalid, "K must be a non-negative real");
  std::vector<FlipTag> tags(inference.size());
  if (inference.empty()) return tags;
  const double mu = mean_of(inference);
  const Box box = iqr_box(inference);
  const double fence = k * (box.q3 - box.q1);
  for (std::size_t i = 0; i < inference.size(); ++i) {
    const double x = inference[i];
    tags[i].flipping = truth == 0 ? x >= 0.5 : x <= 0.5;
    tags[i].outlier = truth == 0 ? x > mu + fence : x < mu - fence;
  }
  return tags;
}

}  // namespace nnf
