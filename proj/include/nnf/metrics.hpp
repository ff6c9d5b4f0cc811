#pragma once
// Detection and mitigation scoring. Labels are 0 (clean) / 1 (poisoned);
// probabilities are the predicted chance of "poisoned".

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nnf {

inline constexpr double kProbClamp = 1e-12;

// Mean natural-log cross entropy with p clamped to [1e-12, 1-1e-12].
double cross_entropy(std::span<const int> labels, std::span<const double> probs);
double brier(std::span<const int> labels, std::span<const double> probs);
// P(score+ > score-) + P(tie)/2. Throws when only one class is present.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

struct ThresholdMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_defined = true, recall_defined = true, f1_defined = true;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Positive prediction when p >= threshold.
ThresholdMetrics threshold_metrics(std::span<const int> labels, std::span<const double> probs,
                                   double threshold = 0.5);

// Equal-width confidence bins on [0,1]; sum over bins of (count/n)*|mean y - mean p|.
double ece(std::span<const int> labels, std::span<const double> probs, std::size_t bins = 10);

// Poisoned: ((asr_pre - asr_post)/asr_pre) * (util_post/util_pre). Clean: util_post/util_pre.
double fidelity(double asr_pre, double asr_post, double util_pre, double util_post, bool model_is_clean);

// Stable-key report: ce, brier, roc_auc, acc, prec, rec, f1, ece (+ *_defined flags).
// roc_auc is omitted when only one class is present.
std::map<std::string, double> metrics_report(std::span<const int> labels, std::span<const double> probs);
std::string format_report_kv(const std::map<std::string, double>& report);
std::string format_report_csv(const std::map<std::string, double>& report);

}  // namespace nnf
