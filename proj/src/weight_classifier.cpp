#include "nnf/weight_classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/metrics.hpp"
#include "nnf/random.hpp"
#include "nnf/simd/kernels.hpp"

namespace nnf {

DetectorConfig DetectorConfig::from_preset(const std::string& name) {
  struct Row {
    const char* name;
    bool reference;
    NormMethod norm;
    bool tensor_selection;
    bool sorted;
  };
  static constexpr std::array<Row, 7> kRows{{
      {"Base", true, NormMethod::tensor, true, false},
      {"A", false, NormMethod::tensor, true, false},
      {"B", true, NormMethod::model, true, true},
      {"C", true, NormMethod::tensor, false, false},
      {"D", true, NormMethod::tensor, true, true},
      {"E", false, NormMethod::tensor, true, true},
      {"F", false, NormMethod::none, true, true},
  }};
  for (const auto& r : kRows) {
    if (name == r.name) {
      DetectorConfig c;
      c.preset = r.name;
      c.use_reference_model = r.reference;
      c.norm_method = r.norm;
      c.tensor_selection = r.tensor_selection;
      c.weight_selection = true;
      c.sorted = r.sorted;
      return c;
    }
  }
  fail(ErrorKind::usage, "unknown detector preset '" + name + "' (expected Base, A, B, C, D, E or F)");
}

const char* norm_method_name(NormMethod m) {
  switch (m) {
    case NormMethod::tensor: return "tensor";
    case NormMethod::model: return "model";
    case NormMethod::none: return "none";
  }
  return "none";
}

NormMethod parse_norm_method(const std::string& s) {
  if (s == "tensor") return NormMethod::tensor;
  if (s == "model") return NormMethod::model;
  if (s == "none") return NormMethod::none;
  fail(ErrorKind::usage, "unknown norm method '" + s + "'");
}

WeightLayout WeightLayout::of(const ModelContainer& m) {
  WeightLayout l;
  l.offsets.push_back(0);
  for (const auto& t : m.tensors()) {
    l.names.push_back(t.name);
    l.shapes.push_back(t.shape);
    l.offsets.push_back(l.offsets.back() + t.numel());
  }
  return l;
}

std::vector<double> flatten_model(const ModelContainer& m) {
  std::vector<double> out;
  for (const auto& t : m.tensors()) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

namespace {

void zscore(std::span<double> seg) {
  if (seg.empty()) return;
  const double mean = simd::sum(seg) / static_cast<double>(seg.size());
  const double sd = std::sqrt(simd::sum_sq_dev(seg, mean) / static_cast<double>(seg.size()));
  // A constant segment standardizes to zeros.
  for (double& v : seg) v = sd > 0.0 ? (v - mean) / sd : 0.0;
}

void sort_segments(std::span<double> v, const WeightLayout& layout) {
  for (std::size_t t = 0; t < layout.count(); ++t) {
    std::sort(v.begin() + static_cast<std::ptrdiff_t>(layout.offsets[t]),
              v.begin() + static_cast<std::ptrdiff_t>(layout.offsets[t + 1]));
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// softplus(z) - y*z, evaluated without overflow.
double logistic_term(double z, int y) {
  const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return sp - (y == 1 ? z : 0.0);
}

}  // namespace

std::vector<double> preprocess(std::span<const double> vec, const WeightLayout& layout, const DetectorConfig& config,
                               std::span<const double> reference) {
  require(vec.size() == layout.total(), ErrorKind::invalid, "weight vector does not match the detector layout");
  std::vector<double> out(vec.begin(), vec.end());
  if (config.sorted) sort_segments(out, layout);
  if (config.use_reference_model) {
    require(reference.size() == vec.size(), ErrorKind::invalid, "reference model layout mismatch");
    std::vector<double> ref(reference.begin(), reference.end());
    if (config.sorted) sort_segments(ref, layout);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= ref[i];
  }
  switch (config.norm_method) {
    case NormMethod::tensor:
      for (std::size_t t = 0; t < layout.count(); ++t) {
        zscore(std::span<double>(out).subspan(layout.offsets[t], layout.offsets[t + 1] - layout.offsets[t]));
      }
      break;
    case NormMethod::model: zscore(out); break;
    case NormMethod::none: break;
  }
  if (config.sorted) sort_segments(out, layout);
  return out;
}

double weight_auc_score(const LabeledWeightDataset& ds, std::size_t k) {
  std::vector<double> col(ds.rows.size());
  for (std::size_t i = 0; i < ds.rows.size(); ++i) col[i] = ds.rows[i][k];
  return std::fabs(roc_auc(ds.labels, col) - 0.5);
}

std::vector<std::size_t> select_weights(std::span<const double> sigma, std::size_t top_n) {
  std::vector<std::size_t> idx(sigma.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
  idx.resize(std::min(top_n, idx.size()));
  return idx;
}

std::vector<std::size_t> select_weights(const LabeledWeightDataset& ds, std::size_t top_n) {
  require(!ds.rows.empty(), ErrorKind::invalid, "empty dataset");
  std::vector<double> sigma(ds.rows.front().size());
  for (std::size_t k = 0; k < sigma.size(); ++k) sigma[k] = weight_auc_score(ds, k);
  return select_weights(sigma, top_n);
}

double logistic_loss(const std::vector<std::vector<double>>& X, std::span<const int> y, std::span<const double> w,
                     double b, double l2_penalty) {
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) total += logistic_term(simd::dot(X[i], w) + b, y[i]);
  return total / static_cast<double>(X.size()) + 0.5 * l2_penalty * simd::sum_squares(w);
}

LogisticFit fit_logistic(const std::vector<std::vector<double>>& X, std::span<const int> y, double l2_penalty,
                         int max_iter) {
  require(!X.empty() && X.size() == y.size(), ErrorKind::invalid, "fit_logistic: X and y differ in length");
  const std::size_t d = X.front().size();
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < X.size(); ++i) {
    require(X[i].size() == d, ErrorKind::invalid, "fit_logistic: ragged design matrix");
    for (double v : X[i]) require(std::isfinite(v), ErrorKind::numeric, "fit_logistic: non-finite input");
    require(y[i] == 0 || y[i] == 1, ErrorKind::invalid, "fit_logistic: labels must be 0 or 1");
    (y[i] == 1 ? has1 : has0) = true;
  }
  require(has0 && has1, ErrorKind::invalid, "fit_logistic needs both classes");
  require(l2_penalty >= 0.0, ErrorKind::invalid, "l2 penalty must be nonnegative");

  const double n = static_cast<double>(X.size());
  LogisticFit fit;
  fit.weights.assign(d, 0.0);
  std::vector<double> gw(d), trial(d);
  double step = 1.0;
  double loss = logistic_loss(X, y, fit.weights, fit.bias, l2_penalty);
  fit.loss_history.push_back(loss);
  for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double r = (sigmoid(simd::dot(X[i], fit.weights) + fit.bias) - y[i]) / n;
      simd::axpy(r, X[i], gw);
      gb += r;
    }
    simd::axpy(l2_penalty, fit.weights, gw);
    double inf = std::fabs(gb);
    for (double g : gw) inf = std::max(inf, std::fabs(g));
    fit.grad_inf_norm = inf;
    if (inf <= 1e-8) break;

    const double g2 = simd::sum_squares(gw) + gb * gb;
    step = std::min(step * 2.0, 1e6);
    bool moved = false;
    for (int halving = 0; halving < 80; ++halving, step *= 0.5) {
      for (std::size_t k = 0; k < d; ++k) trial[k] = fit.weights[k] - step * gw[k];
      const double tb = fit.bias - step * gb;
      const double tl = logistic_loss(X, y, trial, tb, l2_penalty);
      if (tl <= loss - 0.5 * step * g2) {
        fit.weights.swap(trial);
        fit.bias = tb;
        loss = tl;
        moved = true;
        break;
      }
    }
    fit.loss_history.push_back(loss);
    // No representable decrease left: the iterate is optimal to working precision.
    if (!moved) break;
  }
  return fit;
}

namespace {

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                       std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out(folds);
  Rng rng(seed);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    rng.shuffle(idx);
    for (std::size_t j = 0; j < idx.size(); ++j) out[j % folds].push_back(idx[j]);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

bool both_classes(std::span<const int> labels) {
  bool a = false, b = false;
  for (int y : labels) (y == 1 ? b : a) = true;
  return a && b;
}

}  // namespace

std::vector<std::size_t> select_tensors(const LabeledWeightDataset& ds, const WeightLayout& layout, std::size_t top_t,
                                        std::size_t folds, std::uint64_t seed, double l2_penalty) {
  require(folds >= 2, ErrorKind::invalid, "tensor selection needs at least 2 folds");
  const auto parts = stratified_folds(ds.labels, folds, seed);
  std::vector<double> score(layout.count(), 0.0);
  for (std::size_t t = 0; t < layout.count(); ++t) {
    const std::size_t lo = layout.offsets[t], hi = layout.offsets[t + 1];
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::vector<double>> xtr, xte;
      std::vector<int> ytr, yte;
      std::size_t next = 0;
      for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const bool held = next < parts[f].size() && parts[f][next] == i;
        if (held) ++next;
        std::vector<double> x(ds.rows[i].begin() + static_cast<std::ptrdiff_t>(lo),
                              ds.rows[i].begin() + static_cast<std::ptrdiff_t>(hi));
        (held ? xte : xtr).push_back(std::move(x));
        (held ? yte : ytr).push_back(ds.labels[i]);
      }
      if (!both_classes(ytr) || !both_classes(yte)) continue;
      const LogisticFit fit = fit_logistic(xtr, ytr, l2_penalty);
      std::vector<double> s(xte.size());
      for (std::size_t i = 0; i < xte.size(); ++i) s[i] = simd::dot(xte[i], fit.weights) + fit.bias;
      total += roc_auc(yte, s);
      ++used;
    }
    require(used > 0, ErrorKind::numeric, "tensor selection: every fold held a single class");
    score[t] = total / static_cast<double>(used);
  }
  return select_weights(score, top_t);
}

namespace {

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
  return out;
}

}  // namespace

LinearDetector fit_detector(const std::vector<ModelContainer>& models, std::span<const int> labels,
                            const DetectorConfig& config, const ModelContainer* reference) {
  require(!models.empty() && models.size() == labels.size(), ErrorKind::invalid,
          "fit_detector: models and labels differ in length");
  require(both_classes(labels), ErrorKind::invalid, "fit_detector needs both classes");
  LinearDetector det;
  det.config = config;
  det.layout = WeightLayout::of(models.front());
  if (config.use_reference_model) {
    require(reference != nullptr, ErrorKind::usage, "preset " + config.preset + " needs a reference model");
    require(WeightLayout::of(*reference) == det.layout, ErrorKind::invalid, "reference model layout mismatch");
    det.reference = flatten_model(*reference);
  }
  LabeledWeightDataset ds;
  ds.labels.assign(labels.begin(), labels.end());
  for (const auto& m : models) {
    require(WeightLayout::of(m) == det.layout, ErrorKind::invalid, "all models must share one architecture layout");
    ds.rows.push_back(preprocess(flatten_model(m), det.layout, config, det.reference));
  }

  if (config.tensor_selection) {
    det.selected_tensors = select_tensors(ds, det.layout, config.top_tensors, config.folds, config.seed,
                                          config.l2_penalty);
  } else {
    det.selected_tensors.resize(det.layout.count());
    std::iota(det.selected_tensors.begin(), det.selected_tensors.end(), 0);
  }
  std::vector<std::size_t> kept_tensors = det.selected_tensors;
  std::sort(kept_tensors.begin(), kept_tensors.end());
  std::vector<std::size_t> candidates;
  for (std::size_t t : kept_tensors) {
    for (std::size_t k = det.layout.offsets[t]; k < det.layout.offsets[t + 1]; ++k) candidates.push_back(k);
  }
  if (config.weight_selection) {
    std::vector<double> sigma(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) sigma[j] = weight_auc_score(ds, candidates[j]);
    for (std::size_t j : select_weights(sigma, config.top_weights)) det.selected_weights.push_back(candidates[j]);
    std::sort(det.selected_weights.begin(), det.selected_weights.end());
  } else {
    det.selected_weights = candidates;
  }

  std::vector<std::vector<double>> X;
  X.reserve(ds.rows.size());
  for (const auto& r : ds.rows) X.push_back(gather(r, det.selected_weights));
  const LogisticFit fit = fit_logistic(X, labels, config.l2_penalty);
  det.coefficients = fit.weights;
  det.bias = fit.bias;
  return det;
}

double predict_proba(const LinearDetector& d, const ModelContainer& m) {
  require(WeightLayout::of(m) == d.layout, ErrorKind::invalid, "model layout does not match the detector");
  const auto x = gather(preprocess(flatten_model(m), d.layout, d.config, d.reference), d.selected_weights);
  return sigmoid(simd::dot(x, d.coefficients) + d.bias);
}

namespace {

TensorRecord f64_vector(std::string name, std::span<const double> v) {
  return TensorRecord{std::move(name), DType::f64, {v.size()}, std::vector<double>(v.begin(), v.end())};
}

std::vector<double> as_doubles(std::span<const std::size_t> v) { return {v.begin(), v.end()}; }

std::vector<std::size_t> as_indices(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (double x : v) {
    require(x >= 0 && x == std::floor(x), ErrorKind::data, "detector file: index is not a nonnegative integer");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

bool parse_flag(const ModelContainer& c, const std::string& key) {
  const auto v = c.metadata_or(key, "");
  require(v == "0" || v == "1", ErrorKind::data, "detector file: bad flag '" + key + "'");
  return v == "1";
}

}  // namespace

ModelContainer detector_to_container(const LinearDetector& d) {
  ModelContainer c;
  c.set_metadata("kind", "linear_detector");
  c.set_metadata("preset", d.config.preset);
  c.set_metadata("use_reference_model", d.config.use_reference_model ? "1" : "0");
  c.set_metadata("norm_method", norm_method_name(d.config.norm_method));
  c.set_metadata("tensor_selection", d.config.tensor_selection ? "1" : "0");
  c.set_metadata("weight_selection", d.config.weight_selection ? "1" : "0");
  c.set_metadata("sorted", d.config.sorted ? "1" : "0");
  c.set_metadata("top_tensors", std::to_string(d.config.top_tensors));
  c.set_metadata("top_weights", std::to_string(d.config.top_weights));
  c.set_metadata("folds", std::to_string(d.config.folds));
  c.set_metadata("l2_penalty", csv::format_double(d.config.l2_penalty));
  c.set_metadata("seed", std::to_string(d.config.seed));
  nlohmann::ordered_json layout = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < d.layout.count(); ++t) layout.push_back({{"name", d.layout.names[t]}, {"shape", d.layout.shapes[t]}});
  c.set_metadata("layout", layout.dump());
  c.add(f64_vector("coefficients", d.coefficients));
  c.add(TensorRecord{"bias", DType::f64, {}, {d.bias}});
  c.add(f64_vector("selected_weights", as_doubles(d.selected_weights)));
  c.add(f64_vector("selected_tensors", as_doubles(d.selected_tensors)));
  if (!d.reference.empty()) c.add(f64_vector("reference", d.reference));
  return c;
}

LinearDetector detector_from_container(const ModelContainer& c) {
  require(c.metadata_or("kind", "") == "linear_detector", ErrorKind::data, "not a linear detector file");
  LinearDetector d;
  try {
    d.config.preset = c.metadata_or("preset", "");
    d.config.use_reference_model = parse_flag(c, "use_reference_model");
    d.config.norm_method = parse_norm_method(c.metadata_or("norm_method", ""));
    d.config.tensor_selection = parse_flag(c, "tensor_selection");
    d.config.weight_selection = parse_flag(c, "weight_selection");
    d.config.sorted = parse_flag(c, "sorted");
    d.config.top_tensors = std::stoull(c.metadata_or("top_tensors", ""));
    d.config.top_weights = std::stoull(c.metadata_or("top_weights", ""));
    d.config.folds = std::stoull(c.metadata_or("folds", ""));
    d.config.l2_penalty = csv::parse_double(c.metadata_or("l2_penalty", ""));
    d.config.seed = std::stoull(c.metadata_or("seed", ""));
    const auto layout = nlohmann::json::parse(c.metadata_or("layout", "[]"));
    d.layout.offsets.push_back(0);
    for (const auto& e : layout) {
      d.layout.names.push_back(e.at("name").get<std::string>());
      d.layout.shapes.push_back(e.at("shape").get<std::vector<std::size_t>>());
      std::size_t n = 1;
      for (auto s : d.layout.shapes.back()) n *= s;
      d.layout.offsets.push_back(d.layout.offsets.back() + n);
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::data, std::string("detector file: malformed metadata: ") + e.what());
  }
  d.coefficients = get_tensor(c, "coefficients").data;
  d.bias = get_tensor(c, "bias").data.at(0);
  d.selected_weights = as_indices(get_tensor(c, "selected_weights").data);
  d.selected_tensors = as_indices(get_tensor(c, "selected_tensors").data);
  if (c.contains("reference")) d.reference = get_tensor(c, "reference").data;
  require(d.coefficients.size() == d.selected_weights.size(), ErrorKind::data,
          "detector file: coefficient count differs from selection size");
  for (std::size_t k : d.selected_weights) {
    require(k < d.layout.total(), ErrorKind::data, "detector file: selected weight out of range");
  }
  require(d.reference.empty() || d.reference.size() == d.layout.total(), ErrorKind::data,
          "detector file: reference length differs from layout");
  return d;
}

namespace {

// Dixon r10 critical values (Rorabacher 1991), n = 3..30.
constexpr std::array<double, 28> kQ90{.941, .765, .642, .560, .507, .468, .437, .412, .392, .376,
                                      .361, .349, .338, .329, .320, .313, .306, .300, .295, .290,
                                      .285, .281, .277, .273, .269, .266, .263, .260};
constexpr std::array<double, 28> kQ95{.970, .829, .710, .625, .568, .526, .493, .466, .444, .426,
                                      .410, .396, .384, .374, .365, .356, .349, .342, .337, .331,
                                      .326, .321, .317, .312, .308, .305, .301, .298};
constexpr std::array<double, 28> kQ99{.994, .926, .821, .740, .680, .634, .598, .568, .542, .522,
                                      .503, .488, .475, .463, .452, .442, .433, .425, .418, .411,
                                      .404, .399, .393, .388, .384, .380, .376, .372};

}  // namespace

double dixon_critical(std::size_t n, double confidence) {
  require(n >= 3 && n <= 30, ErrorKind::invalid, "Dixon's Q table covers 3..30 values, got " + std::to_string(n));
  const std::size_t i = n - 3;
  if (std::fabs(confidence - 0.90) < 1e-9) return kQ90[i];
  if (std::fabs(confidence - 0.95) < 1e-9) return kQ95[i];
  if (std::fabs(confidence - 0.99) < 1e-9) return kQ99[i];
  fail(ErrorKind::invalid, "Dixon's Q confidence must be 0.90, 0.95 or 0.99");
}

DixonResult dixon_q(std::span<const double> values, double confidence) {
  const std::size_t n = values.size();
  require(n >= 3, ErrorKind::invalid, "Dixon's Q test needs at least 3 values");
  DixonResult r;
  r.row_sums.assign(values.begin(), values.end());
  r.critical = dixon_critical(n, confidence);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double lo = values[order[0]], hi = values[order[n - 1]];
  const double range = hi - lo;
  require(range > 0.0, ErrorKind::numeric, "Dixon's Q test: zero range");
  const double q_hi = (hi - values[order[n - 2]]) / range;
  const double q_lo = (values[order[1]] - lo) / range;
  // Ties favour the high end: the test targets positive accumulation.
  r.suspect_is_max = q_hi >= q_lo;
  r.q = r.suspect_is_max ? q_hi : q_lo;
  r.suspect_row = r.suspect_is_max ? order[n - 1] : order[0];
  r.flagged = r.q > r.critical;
  return r;
}

DixonResult dixon_q_final_layer(const ModelContainer& m, const std::string& final_layer_name, double confidence) {
  const TensorRecord& t = get_tensor(m, final_layer_name);
  require(t.rank() == 2, ErrorKind::invalid, "final layer '" + final_layer_name + "' is not a matrix");
  require(t.shape[0] >= 3, ErrorKind::invalid, "final layer needs at least 3 rows");
  std::vector<double> sums(t.shape[0]);
  for (std::size_t r = 0; r < t.shape[0]; ++r) {
    sums[r] = simd::sum(std::span<const double>(t.data).subspan(r * t.shape[1], t.shape[1]));
  }
  return dixon_q(sums, confidence);
}

}  // namespace nnf
