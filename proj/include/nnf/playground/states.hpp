#pragma once
// Binarized layer states, per-class state histograms, and the inefficiency
// and utilization measures computed from them.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "nnf/playground/dataset.hpp"
#include "nnf/playground/mlp.hpp"

namespace nnf::playground {

struct StateOptions {
  bool by_predicted = false;   // key points by predicted rather than true class
  bool include_output = true;  // treat the output logit as a 1-node layer
  bool operator==(const StateOptions&) const = default;
};

// Bit k is '1' iff output k > 0; node 0 is the leftmost character.
std::string state_string(const std::vector<double>& layer_outputs);

struct StateHistogram {
  static constexpr int kClasses = 2;

  std::vector<std::size_t> nodes;  // per layer
  // counts[layer][class] : state -> count; class index is the label (N=0, P=1)
  std::vector<std::array<std::map<std::string, std::size_t>, kClasses>> counts;
  std::array<std::size_t, kClasses> class_points{};

  std::size_t layers() const { return nodes.size(); }
};

StateHistogram capture_states(const Mlp& m, const Dataset2D& ds, const StateOptions& opt = {});

// sum_{q != 0} q log2 q - log2(m/n), m = 2 classes, n = 2^nodes. Negative
// values mean more occupied states than the class's uniform share.
double modified_kl(const StateHistogram& h, std::size_t layer, int cls);
// True when more states are occupied than the n/m reference states.
bool insufficient(const StateHistogram& h, std::size_t layer, int cls);

struct LayerDelta {
  double delta_p = 0.0;
  double delta_n = 0.0;
};

// Per layer: modified KL of `clean` minus that of `trojaned`, both measured
// on `ds`.
std::vector<LayerDelta> kl_delta(const Mlp& clean, const Mlp& trojaned, const Dataset2D& ds,
                                 const StateOptions& opt = {});
// Mean over hidden layers only.
LayerDelta mean_hidden_delta(const std::vector<LayerDelta>& deltas, std::size_t hidden_layers);

enum class Verdict { from_P_to_N, from_N_to_P, from_both, not_detectable, from_P_only, from_N_only };
const char* verdict_name(Verdict v);

inline constexpr double kDefaultSigma = 0.5;
Verdict quadrant(double delta_p, double delta_n, double sigma = kDefaultSigma);

struct Utilization {
  double eta_state = 0.0;  // distinct occupied states / n
  double eta_h = 0.0;      // H(Q) / log2 n
  double eta_kl = 0.0;     // sum q log2(q n)
};

Utilization utilization(const StateHistogram& h, std::size_t layer, int cls);

enum class UtilizationMetric { state, entropy, kl };
UtilizationMetric parse_utilization_metric(const std::string& s);

// One value per layer for class `cls`.
std::vector<double> class_encoding(const StateHistogram& h, int cls, UtilizationMetric metric);
// Rows are class encodings in label order (N, P).
std::vector<std::vector<double>> fingerprint(const Mlp& m, const Dataset2D& ds, UtilizationMetric metric,
                                             const StateOptions& opt = {});

}  // namespace nnf::playground
