#include "nnf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"

namespace nnf {

namespace {

void check_population(std::span<const int> labels, std::span<const double> probs) {
  require(!labels.empty(), ErrorKind::invalid, "empty population");
  require(labels.size() == probs.size(), ErrorKind::invalid, "labels and predictions differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::invalid, "labels must be 0 or 1");
    require(std::isfinite(probs[i]), ErrorKind::invalid, "non-finite prediction");
  }
}

}  // namespace

double cross_entropy(std::span<const int> labels, std::span<const double> probs) {
  check_population(labels, probs);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    total += labels[i] == 1 ? -std::log(p) : -std::log1p(-p);
  }
  return total / static_cast<double>(labels.size());
}

double brier(std::span<const int> labels, std::span<const double> probs) {
  check_population(labels, probs);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = probs[i] - labels[i];
    total += d * d;
  }
  return total / static_cast<double>(labels.size());
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  require(labels.size() == scores.size(), ErrorKind::invalid, "labels and scores differ in length");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Integer pair counts keep the result identical to direct pair enumeration.
  std::uint64_t negatives_below = 0, greater = 0, ties = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    greater += pos * negatives_below;
    ties += pos * neg;
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  require(n_pos > 0 && n_neg > 0, ErrorKind::invalid, "roc_auc needs both classes");
  return static_cast<double>(2 * greater + ties) / static_cast<double>(2 * n_pos * n_neg);
}

ThresholdMetrics threshold_metrics(std::span<const int> labels, std::span<const double> probs, double threshold) {
  check_population(labels, probs);
  ThresholdMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    if (pred && labels[i] == 1) ++m.tp;
    else if (pred) ++m.fp;
    else if (labels[i] == 1) ++m.fn;
    else ++m.tn;
  }
  const double n = static_cast<double>(labels.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  m.precision_defined = m.tp + m.fp > 0;
  m.recall_defined = m.tp + m.fn > 0;
  m.precision = m.precision_defined ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.recall_defined ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1_defined = m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0;
  m.f1 = m.f1_defined ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

double ece(std::span<const int> labels, std::span<const double> probs, std::size_t bins) {
  check_population(labels, probs);
  require(bins >= 1, ErrorKind::invalid, "ece needs at least one bin");
  std::vector<double> conf(bins, 0.0), acc(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probs[i], 0.0, 1.0);
    const auto b = std::min(static_cast<std::size_t>(p * static_cast<double>(bins)), bins - 1);
    conf[b] += p;
    acc[b] += labels[i];
    ++count[b];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double c = static_cast<double>(count[b]);
    total += c * std::fabs(acc[b] / c - conf[b] / c);
  }
  return total / static_cast<double>(labels.size());
}

double fidelity(double asr_pre, double asr_post, double util_pre, double util_post, bool model_is_clean) {
  require(util_pre > 0.0, ErrorKind::numeric, "fidelity: utility before mitigation must be positive");
  const double util = util_post / util_pre;
  if (model_is_clean) return util;
  require(asr_pre > 0.0, ErrorKind::numeric, "fidelity: attack success rate before mitigation must be positive");
  return (asr_pre - asr_post) / asr_pre * util;
}

std::map<std::string, double> metrics_report(std::span<const int> labels, std::span<const double> probs) {
  std::map<std::string, double> r;
  r["n"] = static_cast<double>(labels.size());
  r["ce"] = cross_entropy(labels, probs);
  r["brier"] = brier(labels, probs);
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) r["roc_auc"] = roc_auc(labels, probs);
  const auto t = threshold_metrics(labels, probs);
  r["acc"] = t.accuracy;
  r["prec"] = t.precision;
  r["prec_defined"] = t.precision_defined;
  r["rec"] = t.recall;
  r["rec_defined"] = t.recall_defined;
  r["f1"] = t.f1;
  r["f1_defined"] = t.f1_defined;
  r["ece"] = ece(labels, probs);
  return r;
}

std::string format_report_kv(const std::map<std::string, double>& report) {
  std::string out;
  for (const auto& [k, v] : report) out += k + "=" + csv::format_double(v) + "\n";
  return out;
}

std::string format_report_csv(const std::map<std::string, double>& report) {
  csv::Table t;
  t.header = {"key", "value"};
  for (const auto& [k, v] : report) t.rows.push_back({k, csv::format_double(v)});
  return csv::format(t);
}

}  // namespace nnf
