#include "nnf/playground/states.hpp"

#include <cmath>

#include "nnf/error.hpp"

namespace nnf::playground {

namespace {

const std::map<std::string, std::size_t>& class_counts(const StateHistogram& h, std::size_t layer, int cls) {
  require(layer < h.layers(), ErrorKind::invalid, "layer index out of range");
  require(cls == kP || cls == kN, ErrorKind::invalid, "class must be P or N");
  require(h.class_points[static_cast<std::size_t>(cls)] > 0, ErrorKind::data,
          std::string("no points of class ") + (cls == kP ? "P" : "N"));
  return h.counts[layer][static_cast<std::size_t>(cls)];
}

// sum q log2 q over occupied states.
double neg_entropy(const std::map<std::string, std::size_t>& counts, std::size_t total) {
  double s = 0.0;
  for (const auto& [state, c] : counts) {
    const double q = static_cast<double>(c) / static_cast<double>(total);
    s += q * std::log2(q);
  }
  return s;
}

}  // namespace

std::string state_string(const std::vector<double>& layer_outputs) {
  std::string s(layer_outputs.size(), '0');
  for (std::size_t k = 0; k < layer_outputs.size(); ++k)
    if (layer_outputs[k] > 0.0) s[k] = '1';
  return s;
}

StateHistogram capture_states(const Mlp& m, const Dataset2D& ds, const StateOptions& opt) {
  m.validate();
  ds.validate();
  StateHistogram h;
  const std::size_t layers = opt.include_output ? m.layers.size() : m.hidden_layers();
  for (std::size_t l = 0; l < layers; ++l) h.nodes.push_back(m.layers[l].out);
  h.counts.resize(layers);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto trace = forward_trace(m, ds.points[i]);
    const int cls = opt.by_predicted ? (trace.back()[0] > 0.0 ? kP : kN) : ds.labels[i];
    ++h.class_points[static_cast<std::size_t>(cls)];
    for (std::size_t l = 0; l < layers; ++l) ++h.counts[l][static_cast<std::size_t>(cls)][state_string(trace[l])];
  }
  return h;
}

double modified_kl(const StateHistogram& h, std::size_t layer, int cls) {
  const auto& counts = class_counts(h, layer, cls);
  const double log2_n = static_cast<double>(h.nodes[layer]);
  // -log2(m/n) = log2 n - log2 m
  return neg_entropy(counts, h.class_points[static_cast<std::size_t>(cls)]) + log2_n -
         std::log2(static_cast<double>(StateHistogram::kClasses));
}

bool insufficient(const StateHistogram& h, std::size_t layer, int cls) {
  const auto& counts = class_counts(h, layer, cls);
  const double share = std::ldexp(1.0, static_cast<int>(h.nodes[layer])) / StateHistogram::kClasses;
  return static_cast<double>(counts.size()) > share;
}

std::vector<LayerDelta> kl_delta(const Mlp& clean, const Mlp& trojaned, const Dataset2D& ds,
                                 const StateOptions& opt) {
  require(clean.same_architecture(trojaned), ErrorKind::conflict, "models differ in architecture");
  const StateHistogram a = capture_states(clean, ds, opt);
  const StateHistogram b = capture_states(trojaned, ds, opt);
  std::vector<LayerDelta> out(a.layers());
  for (std::size_t l = 0; l < a.layers(); ++l) {
    out[l].delta_p = modified_kl(a, l, kP) - modified_kl(b, l, kP);
    out[l].delta_n = modified_kl(a, l, kN) - modified_kl(b, l, kN);
  }
  return out;
}

LayerDelta mean_hidden_delta(const std::vector<LayerDelta>& deltas, std::size_t hidden_layers) {
  require(hidden_layers >= 1 && hidden_layers <= deltas.size(), ErrorKind::invalid,
          "hidden layer count out of range");
  LayerDelta m;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    m.delta_p += deltas[l].delta_p;
    m.delta_n += deltas[l].delta_n;
  }
  m.delta_p /= static_cast<double>(hidden_layers);
  m.delta_n /= static_cast<double>(hidden_layers);
  return m;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::from_P_to_N: return "from_P_to_N";
    case Verdict::from_N_to_P: return "from_N_to_P";
    case Verdict::from_both: return "from_both";
    case Verdict::not_detectable: return "not_detectable";
    case Verdict::from_P_only: return "from_P_only";
    case Verdict::from_N_only: return "from_N_only";
  }
  return "?";
}

Verdict quadrant(double delta_p, double delta_n, double sigma) {
  require(sigma > 0.0, ErrorKind::invalid, "sigma must be positive");
  const bool p_up = delta_p > sigma, p_down = delta_p < -sigma;
  const bool n_up = delta_n > sigma, n_down = delta_n < -sigma;
  if (p_up && n_down) return Verdict::from_P_to_N;
  if (p_down && n_up) return Verdict::from_N_to_P;
  if (!p_up && !p_down && !n_up && !n_down) return Verdict::not_detectable;
  if (p_up && n_up) return Verdict::from_both;
  if (p_up || p_down) return n_up || n_down ? Verdict::from_both : Verdict::from_P_only;
  return Verdict::from_N_only;
}

Utilization utilization(const StateHistogram& h, std::size_t layer, int cls) {
  const auto& counts = class_counts(h, layer, cls);
  const std::size_t total = h.class_points[static_cast<std::size_t>(cls)];
  const double log2_n = static_cast<double>(h.nodes[layer]);
  const double ne = neg_entropy(counts, total);
  Utilization u;
  u.eta_state = static_cast<double>(counts.size()) / std::ldexp(1.0, static_cast<int>(h.nodes[layer]));
  u.eta_h = -ne / log2_n;
  u.eta_kl = ne + log2_n;
  return u;
}

UtilizationMetric parse_utilization_metric(const std::string& s) {
  if (s == "state") return UtilizationMetric::state;
  if (s == "entropy") return UtilizationMetric::entropy;
  if (s == "kl") return UtilizationMetric::kl;
  fail(ErrorKind::invalid, "unknown utilization metric: " + s);
}

std::vector<double> class_encoding(const StateHistogram& h, int cls, UtilizationMetric metric) {
  std::vector<double> e;
  for (std::size_t l = 0; l < h.layers(); ++l) {
    const Utilization u = utilization(h, l, cls);
    e.push_back(metric == UtilizationMetric::state ? u.eta_state
                : metric == UtilizationMetric::entropy ? u.eta_h
                                                       : u.eta_kl);
  }
  return e;
}

std::vector<std::vector<double>> fingerprint(const Mlp& m, const Dataset2D& ds, UtilizationMetric metric,
                                             const StateOptions& opt) {
  const StateHistogram h = capture_states(m, ds, opt);
  return {class_encoding(h, kN, metric), class_encoding(h, kP, metric)};
}

}  // namespace nnf::playground
