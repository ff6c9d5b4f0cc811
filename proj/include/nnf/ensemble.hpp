#pragma once
// Detector stacking: sanitization, eligibility filtering, LASSO blending,
// rank-distance clustering with tentative ensembles, and random forests with
// out-of-bag scoring and permutation importance.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnf/numerics.hpp"

namespace nnf {

// Models x detectors table of trojan probabilities, possibly missing.
struct DetectorOutputs {
  std::vector<std::string> model_ids;
  std::vector<std::string> detector_ids;
  std::vector<std::vector<std::optional<double>>> values;  // values[model][detector]
  std::vector<int> truth;

  std::size_t models() const { return model_ids.size(); }
  std::size_t detectors() const { return detector_ids.size(); }
  // Column j with missing entries replaced by fill.
  std::vector<double> column(std::size_t j, double fill = 0.5) const;
  // Dense rows (models x detectors); requires every entry present.
  std::vector<std::vector<double>> dense() const;
  void validate() const;
};

// CSV: model_id, ground_truth, then one column per detector; empty cell = missing.
DetectorOutputs parse_detector_outputs(const std::string& csv_text);
std::string format_detector_outputs(const DetectorOutputs& d);

// v >= 1 -> 1-1e-12, v <= 0 -> 1e-12, missing -> 0.5.
DetectorOutputs sanitize(const DetectorOutputs& d);

struct DetectorQuality {
  double ce = 0, auc = 0, coverage = 0;
  bool auc_defined = false;
  bool eligible = false;
};

// Computed on present (pre-sanitize) entries; CE clamps to [1e-12, 1-1e-12].
std::vector<DetectorQuality> detector_quality(const DetectorOutputs& d, double ce_max = 0.44, double auc_min = 0.85,
                                              double coverage_min = 0.5);
std::vector<std::size_t> filter_eligible(const DetectorOutputs& d, double ce_max = 0.44, double auc_min = 0.85,
                                         double coverage_min = 0.5);

struct LassoBlend {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.0;
  int sweeps = 0;
  double kkt_residual = 0.0;

  double predict(std::span<const double> row) const;  // clamped to [0,1]
};

// Minimizes (1/2n)|y - X b - c|^2 + alpha |b|_1 by cyclic coordinate descent
// with an unpenalized intercept; stops when the KKT residual is <= 1e-7.
LassoBlend fit_lasso_blend(const std::vector<std::vector<double>>& X, std::span<const int> y, double alpha = 0.005);

struct DistanceMatrix {
  Matrix d;
  std::vector<bool> constant;  // detector column has no rank information
};

// d(i,j) = 1 - tau_b(col_i, col_j); a constant column sits at distance 1 from all others.
DistanceMatrix detector_distance_matrix(const std::vector<std::vector<double>>& columns);

struct Merge {
  std::size_t a = 0, b = 0;  // smallest member index of each merged cluster, a < b
  double height = 0.0;
};

// Single linkage; ties broken by the smallest (a, b) pair.
std::vector<Merge> single_linkage(const Matrix& dist);
// Cluster label per item (labels numbered by first appearance).
std::vector<std::size_t> cut_by_count(const std::vector<Merge>& merges, std::size_t items, std::size_t k);
std::vector<std::size_t> cut_by_height(const std::vector<Merge>& merges, std::size_t items, double height);

// result[k-1] = minimum-CE detector of each of the k clusters, ascending.
std::vector<std::vector<std::size_t>> tentative_ensembles(const Matrix& dist, std::span<const double> ce,
                                                          std::size_t max_size);

// Manual balancing: swap detector `from` for `to` in an ensemble.
struct EnsembleSwap {
  std::size_t from = 0, to = 0;
};
// Applies each swap to every ensemble that holds `from` and where `to` shares
// its cluster, so each ensemble keeps one member per cluster. A swap that
// fits no ensemble is an error.
std::vector<std::vector<std::size_t>> override_ensembles(const Matrix& dist,
                                                         std::vector<std::vector<std::size_t>> ensembles,
                                                         std::span<const EnsembleSwap> swaps);

enum class MaxFeatures { sqrt, all };

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 3;
  MaxFeatures max_features = MaxFeatures::sqrt;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::size_t left = 0, right = 0;
  double count0 = 0, count1 = 0;  // bootstrap-weighted class counts

  double prob1() const { return count1 / (count0 + count1); }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::uint32_t> in_bag;  // bootstrap multiplicity per training row

  double predict_proba(std::span<const double> row) const;
  bool operator==(const Tree&) const = default;
};

struct ForestModel {
  ForestParams params;
  std::size_t features = 0;
  std::vector<Tree> trees;

  double predict_proba(std::span<const double> row) const;
  int predict(std::span<const double> row) const { return predict_proba(row) >= 0.5 ? 1 : 0; }
  // Features used by at least one split.
  std::vector<bool> split_features() const;
  bool operator==(const ForestModel& o) const { return features == o.features && trees == o.trees; }
};

ForestModel fit_forest(const std::vector<std::vector<double>>& X, std::span<const int> y, const ForestParams& hp);

struct OobResult {
  double accuracy = 0.0;
  std::size_t covered = 0;
  std::size_t skipped = 0;
};

OobResult oob_accuracy(const ForestModel& f, const std::vector<std::vector<double>>& X, std::span<const int> y);
// Fraction of training rows outside each tree's bootstrap.
std::vector<double> oob_coverage_per_tree(const ForestModel& f);
double accuracy(const ForestModel& f, const std::vector<std::vector<double>>& X, std::span<const int> y);

std::vector<double> permutation_importance(const ForestModel& f, const std::vector<std::vector<double>>& X,
                                           std::span<const int> y, std::size_t repeats, std::uint64_t seed);

struct GridPoint {
  std::size_t max_depth = 0;
  MaxFeatures max_features = MaxFeatures::sqrt;
  double mean_oob = 0.0;
};

// Mean OOB accuracy over `refits` distinct seeds per (depth, feature rule).
std::vector<GridPoint> forest_grid_search(const std::vector<std::vector<double>>& X, std::span<const int> y,
                                          std::span<const std::size_t> depths, std::size_t n_trees,
                                          std::size_t refits, std::uint64_t seed);

}  // namespace nnf
