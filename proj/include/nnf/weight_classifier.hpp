#pragma once
// Linear weight-space trojan detector: flattened (optionally sorted,
// reference-subtracted, standardized) weights, AUC-ranked tensor and weight
// selection, L2-regularized logistic regression.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnf/tensor_store.hpp"

namespace nnf {

enum class NormMethod { tensor, model, none };

struct DetectorConfig {
  bool use_reference_model = true;
  NormMethod norm_method = NormMethod::tensor;
  bool tensor_selection = true;
  bool weight_selection = true;
  bool sorted = false;
  std::string preset = "Base";

  std::size_t top_tensors = 25;
  std::size_t top_weights = 1000;
  std::size_t folds = 5;
  double l2_penalty = 1.0;
  std::uint64_t seed = 0;

  // Base, A..F. Weight selection is on for every preset.
  static DetectorConfig from_preset(const std::string& name);
  bool operator==(const DetectorConfig&) const = default;
};

const char* norm_method_name(NormMethod m);
NormMethod parse_norm_method(const std::string& s);

// Tensor names and segment boundaries of a flattened model.
struct WeightLayout {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> offsets;  // size names.size() + 1

  static WeightLayout of(const ModelContainer& m);
  std::size_t total() const { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t count() const { return names.size(); }
  bool operator==(const WeightLayout&) const = default;
};

std::vector<double> flatten_model(const ModelContainer& m);

// With sorted on, both the vector and the reference are sorted per tensor
// before subtraction and the result is sorted again after normalization, so
// the output is a function of each tensor's element multiset only.
std::vector<double> preprocess(std::span<const double> vec, const WeightLayout& layout, const DetectorConfig& config,
                               std::span<const double> reference = {});

// rows[i] is model i's preprocessed vector; labels are 0 (clean) / 1 (poisoned).
struct LabeledWeightDataset {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

// |AUC(column k as score) - 0.5|.
double weight_auc_score(const LabeledWeightDataset& ds, std::size_t k);
std::vector<std::size_t> select_weights(std::span<const double> sigma, std::size_t top_n);
std::vector<std::size_t> select_weights(const LabeledWeightDataset& ds, std::size_t top_n);

// Ranks tensors by mean held-out AUC of a per-tensor logistic fit over
// stratified folds; returns the top_t tensor indices in rank order.
std::vector<std::size_t> select_tensors(const LabeledWeightDataset& ds, const WeightLayout& layout, std::size_t top_t,
                                        std::size_t folds, std::uint64_t seed, double l2_penalty = 1.0);

struct LogisticFit {
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;
  double grad_inf_norm = 0.0;
  std::vector<double> loss_history;
};

// Minimizes mean logistic loss + (l2/2)|W|^2 by gradient descent with
// backtracking; stops when |grad|_inf <= 1e-8 or after max_iter steps.
LogisticFit fit_logistic(const std::vector<std::vector<double>>& X, std::span<const int> y, double l2_penalty,
                         int max_iter = 10000);
double logistic_loss(const std::vector<std::vector<double>>& X, std::span<const int> y, std::span<const double> w,
                     double b, double l2_penalty);

struct LinearDetector {
  DetectorConfig config;
  WeightLayout layout;
  std::vector<double> reference;                // flattened raw reference weights, empty if unused
  std::vector<std::size_t> selected_tensors;    // rank order
  std::vector<std::size_t> selected_weights;    // indices into the flattened vector, ascending
  std::vector<double> coefficients;
  double bias = 0.0;

  bool operator==(const LinearDetector&) const = default;
};

LinearDetector fit_detector(const std::vector<ModelContainer>& models, std::span<const int> labels,
                            const DetectorConfig& config, const ModelContainer* reference = nullptr);
double predict_proba(const LinearDetector& d, const ModelContainer& m);

ModelContainer detector_to_container(const LinearDetector& d);
LinearDetector detector_from_container(const ModelContainer& c);

struct DixonResult {
  std::vector<double> row_sums;
  double q = 0.0;
  double critical = 0.0;
  std::size_t suspect_row = 0;
  bool suspect_is_max = true;
  bool flagged = false;
};

// confidence in {0.90, 0.95, 0.99}; 3 <= n <= 30.
double dixon_critical(std::size_t n, double confidence);
DixonResult dixon_q(std::span<const double> values, double confidence);
DixonResult dixon_q_final_layer(const ModelContainer& m, const std::string& final_layer_name, double confidence);

}  // namespace nnf
