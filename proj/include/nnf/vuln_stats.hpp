#pragma once
// Statistics for natural vulnerabilities and detector sensitivity: the
// Monte-Carlo subset test, NV candidates, conditional-ACE z-scores, Sobol
// indices, the box-plot overlap index, and flipping/outlier tags.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nnf/ensemble.hpp"

namespace nnf {

struct SubsetTestConfig {
  std::size_t n_mc = 10000;   // random subsets forming the null distribution
  std::size_t pool = 200;     // peers per average; 0 = every other random subset
  double threshold = 95.0;    // significant iff percentile > threshold
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct SubsetTestResult {
  double subset_avg_distance = 0.0;
  std::vector<double> null_distances;  // one average distance per random subset
  double percentile = 0.0;             // mid-rank, in [0, 100]
  bool significant = false;
};

// Numeric values use the two-sample KS distance; categorical values the
// largest absolute difference in per-category fraction. Random subsets have
// the candidate's size and are drawn without replacement. The candidate and
// every null subset are averaged against the same peers, so under a random
// candidate the percentile is uniform.
SubsetTestResult mc_subset_test(std::span<const double> values, std::span<const std::size_t> subset,
                                const SubsetTestConfig& cfg);
SubsetTestResult mc_subset_test(const std::vector<std::string>& values, std::span<const std::size_t> subset,
                                const SubsetTestConfig& cfg);

// Clean models that at most half of the detectors classify correctly at the
// 0.5 threshold (0.5 itself counts as wrong). Missing outputs are skipped.
std::vector<std::string> nv_candidates(const DetectorOutputs& outputs);

struct AceResult {
  double p = 0.0, p_prime = 0.0, pooled = 0.0, z = 0.0;
  bool valid = false;  // m, m', n - m, n' - m' all >= 5
};

// Two-proportion z-score of m/n against m'/n'. Throws numeric when the pooled
// proportion is 0 or 1.
AceResult ace_zscore(std::size_t m, std::size_t n, std::size_t m_prime, std::size_t n_prime);

struct SobolConfig {
  std::size_t n_base = 1 << 12;  // power of 2, >= 64
  std::size_t bootstrap = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // f must be thread-safe when > 1
};

struct SobolIndex {
  double s1 = 0.0, st = 0.0;
  double ci1 = 0.0, cit = 0.0;  // 1.96 bootstrap standard deviations
  bool needs_more_samples = false;  // a CI exceeds 10% of its index
};

// Saltelli A/B/AB_i design over independent uniform boxes; Janon first-order
// and Jansen total-order estimators. Throws numeric on zero output variance.
std::vector<SobolIndex> sobol_indices(const std::function<double(std::span<const double>)>& f,
                                      const std::vector<std::pair<double, double>>& boxes, const SobolConfig& cfg);

struct Box {
  double q1 = 0.0, q3 = 0.0;
};

Box iqr_box(std::span<const double> xs);
// (Ov1 + Ov2) / (Ov1 + Nov1 + Ov2 + Nov2); two points give 1 when equal, else 0.
double overlap_index(Box a, Box b);

struct FlipTag {
  bool flipping = false;
  bool outlier = false;
};

// truth 0 = clean, 1 = poisoned. Flipping: inference on the wrong side of 0.5
// (0.5 is wrong). Outlier: beyond mean +/- K * IQR of the inference values,
// on the side of the wrong answer only.
std::vector<FlipTag> flipping_outlier_classify(std::span<const double> inference, int truth, double k = 1.5);

}  // namespace nnf
