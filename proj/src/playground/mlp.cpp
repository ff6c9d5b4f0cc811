#include "nnf/playground/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nnf/error.hpp"
#include "nnf/random.hpp"
#include "nnf/simd/kernels.hpp"

namespace nnf::playground {

namespace {

constexpr std::uint64_t kSplitStream = 0x5eed5711ULL;

struct Names {
  Feature f;
  const char* name;
};
constexpr Names kFeatureNames[] = {
    {Feature::x1, "x1"},         {Feature::x2, "x2"},         {Feature::x1_sq, "x1^2"},
    {Feature::x2_sq, "x2^2"},    {Feature::x1_x2, "x1*x2"},   {Feature::sin_x1, "sin(x1)"},
    {Feature::sin_x2, "sin(x2)"}, {Feature::sin_x1_x2, "sin(x1*x2)"}, {Feature::sin_r2, "sin(x1^2+x2^2)"},
    {Feature::x1_plus_x2, "x1+x2"},
};

double activation_derivative(Activation a, double z, double out) {
  switch (a) {
    case Activation::tanh: return 1.0 - out * out;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return out * (1.0 - out);
  }
  return 0.0;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) - y z
double logistic_term(double z, int y) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - (y == kP ? z : 0.0);
}

struct Trace {
  std::vector<std::vector<double>> pre;   // per layer
  std::vector<std::vector<double>> post;  // post[0] = input features
};

Trace run(const Mlp& m, Point2 p) {
  Trace t;
  t.post.push_back(feature_vector(m.features, p));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DenseLayer& L = m.layers[l];
    const bool output = l + 1 == m.layers.size();
    std::vector<double> z(L.out), a(L.out);
    const std::vector<double>& in = t.post.back();
    for (std::size_t o = 0; o < L.out; ++o) {
      z[o] = simd::dot(std::span(L.weights).subspan(o * L.in, L.in), in) + L.bias[o];
      a[o] = output ? z[o] : activate(m.activation, z[o]);
    }
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  return t;
}

}  // namespace

const char* feature_name(Feature f) {
  for (const auto& n : kFeatureNames)
    if (n.f == f) return n.name;
  return "?";
}

Feature parse_feature(const std::string& s) {
  for (const auto& n : kFeatureNames)
    if (s == n.name) return n.f;
  fail(ErrorKind::invalid, "unknown feature: " + s);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  fail(ErrorKind::invalid, "unknown activation: " + s);
}

const char* regularization_name(Regularization r) {
  switch (r) {
    case Regularization::none: return "none";
    case Regularization::l1: return "l1";
    case Regularization::l2: return "l2";
  }
  return "?";
}

Regularization parse_regularization(const std::string& s) {
  if (s == "none") return Regularization::none;
  if (s == "l1" || s == "L1") return Regularization::l1;
  if (s == "l2" || s == "L2") return Regularization::l2;
  fail(ErrorKind::invalid, "unknown regularization: " + s);
}

void MlpSpec::validate() const {
  require(!features.empty(), ErrorKind::invalid, "at least one feature is required");
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j)
      require(features[i] != features[j], ErrorKind::invalid, "duplicate feature");
  require(hidden.size() <= kMaxHiddenLayers, ErrorKind::invalid, "at most 6 hidden layers");
  for (auto h : hidden)
    require(h >= 1 && h <= kMaxNodesPerLayer, ErrorKind::invalid, "hidden layer size must lie in [1,9]");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorKind::invalid, "learning rate must be positive");
  require(std::isfinite(regularization_rate) && regularization_rate >= 0.0, ErrorKind::invalid,
          "regularization rate must be non-negative");
  require(train_ratio > 0.0 && train_ratio <= 1.0, ErrorKind::invalid, "train ratio must lie in (0,1]");
  require(batch_size >= 1, ErrorKind::invalid, "batch size must be positive");
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.weights.size() + L.bias.size();
  return n;
}

bool Mlp::same_architecture(const Mlp& o) const {
  if (features != o.features || activation != o.activation || layers.size() != o.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].in != o.layers[l].in || layers[l].out != o.layers[l].out) return false;
  return true;
}

void Mlp::validate() const {
  require(!features.empty() && !layers.empty(), ErrorKind::data, "network has no features or layers");
  std::size_t width = features.size();
  for (const auto& L : layers) {
    require(L.in == width && L.out >= 1, ErrorKind::data, "layer shapes do not chain");
    require(L.weights.size() == L.in * L.out && L.bias.size() == L.out, ErrorKind::data,
            "layer parameter sizes do not match its shape");
    width = L.out;
  }
  require(width == 1, ErrorKind::data, "output layer must have a single unit");
}

std::vector<double> feature_vector(std::span<const Feature> features, Point2 p) {
  std::vector<double> v;
  v.reserve(features.size());
  const double a = p.x1, b = p.x2;
  for (Feature f : features) {
    switch (f) {
      case Feature::x1: v.push_back(a); break;
      case Feature::x2: v.push_back(b); break;
      case Feature::x1_sq: v.push_back(a * a); break;
      case Feature::x2_sq: v.push_back(b * b); break;
      case Feature::x1_x2: v.push_back(a * b); break;
      case Feature::sin_x1: v.push_back(std::sin(a)); break;
      case Feature::sin_x2: v.push_back(std::sin(b)); break;
      case Feature::sin_x1_x2: v.push_back(std::sin(a * b)); break;
      case Feature::sin_r2: v.push_back(std::sin(a * a + b * b)); break;
      case Feature::x1_plus_x2: v.push_back(a + b); break;
    }
  }
  return v;
}

Mlp init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Mlp m;
  m.features = spec.features;
  m.activation = spec.activation;
  Rng rng(seed);
  std::size_t in = spec.features.size();
  std::vector<std::size_t> widths = spec.hidden;
  widths.push_back(1);
  for (std::size_t out : widths) {
    DenseLayer L;
    L.in = in;
    L.out = out;
    L.weights.resize(in * out);
    for (auto& w : L.weights) w = rng.uniform() - 0.5;
    L.bias.assign(out, 0.1);
    m.layers.push_back(std::move(L));
    in = out;
  }
  return m;
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::sigmoid: return sigmoid(z);
  }
  return z;
}

std::vector<std::vector<double>> forward_trace(const Mlp& m, Point2 p) {
  Trace t = run(m, p);
  t.post.erase(t.post.begin());
  return std::move(t.post);
}

double logit(const Mlp& m, Point2 p) { return run(m, p).post.back()[0]; }
double predict_proba(const Mlp& m, Point2 p) { return sigmoid(logit(m, p)); }
int predict_label(const Mlp& m, Point2 p) { return logit(m, p) > 0.0 ? kP : kN; }

std::vector<double> parameters(const Mlp& m) {
  std::vector<double> theta;
  theta.reserve(m.parameter_count());
  for (const auto& L : m.layers) {
    theta.insert(theta.end(), L.weights.begin(), L.weights.end());
    theta.insert(theta.end(), L.bias.begin(), L.bias.end());
  }
  return theta;
}

void set_parameters(Mlp& m, std::span<const double> theta) {
  require(theta.size() == m.parameter_count(), ErrorKind::conflict, "parameter vector size mismatch");
  std::size_t k = 0;
  for (auto& L : m.layers) {
    for (auto& w : L.weights) w = theta[k++];
    for (auto& b : L.bias) b = theta[k++];
  }
}

double loss_and_gradient(const Mlp& m, const Dataset2D& ds, std::span<const std::size_t> batch,
                         Regularization reg, double reg_rate, std::vector<double>* grad) {
  require(!batch.empty(), ErrorKind::invalid, "empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  // Offsets of each layer's block in the parameters() layout.
  std::vector<std::size_t> offset(m.layers.size());
  std::size_t total = 0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    offset[l] = total;
    total += m.layers[l].weights.size() + m.layers[l].bias.size();
  }
  if (grad) grad->assign(total, 0.0);

  double loss = 0.0;
  for (std::size_t idx : batch) {
    const Trace t = run(m, ds.points[idx]);
    const double z = t.pre.back()[0];
    loss += logistic_term(z, ds.labels[idx]) * inv_b;
    if (!grad) continue;
    std::vector<double> delta{(sigmoid(z) - (ds.labels[idx] == kP ? 1.0 : 0.0)) * inv_b};
    for (std::size_t l = m.layers.size(); l-- > 0;) {
      const DenseLayer& L = m.layers[l];
      const std::vector<double>& in = t.post[l];
      double* gw = grad->data() + offset[l];
      double* gb = gw + L.weights.size();
      for (std::size_t o = 0; o < L.out; ++o) {
        simd::axpy(delta[o], in, std::span(gw + o * L.in, L.in));
        gb[o] += delta[o];
      }
      if (l == 0) break;
      std::vector<double> prev(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o)
        simd::axpy(delta[o], std::span(L.weights).subspan(o * L.in, L.in), prev);
      for (std::size_t i = 0; i < L.in; ++i)
        prev[i] *= activation_derivative(m.activation, t.pre[l - 1][i], t.post[l][i]);
      delta = std::move(prev);
    }
  }

  if (reg != Regularization::none && reg_rate > 0.0) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto& w = m.layers[l].weights;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (reg == Regularization::l2) {
          loss += 0.5 * reg_rate * w[i] * w[i];
          if (grad) (*grad)[offset[l] + i] += reg_rate * w[i];
        } else {
          loss += reg_rate * std::abs(w[i]);
          if (grad) (*grad)[offset[l] + i] += reg_rate * ((w[i] > 0) - (w[i] < 0));
        }
      }
    }
  }
  return loss;
}

std::vector<std::size_t> train_indices(const Dataset2D& ds, double train_ratio, std::uint64_t seed) {
  require(train_ratio > 0.0 && train_ratio <= 1.0, ErrorKind::invalid, "train ratio must lie in (0,1]");
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (int label : {kP, kN}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == label) idx.push_back(i);
    rng.shuffle(idx);
    const auto take = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(idx.size())));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> training_split(const Dataset2D& ds, const MlpSpec& spec) {
  return train_indices(ds, spec.train_ratio, derive_seed(spec.seed, kSplitStream));
}

namespace {

TrainResult run_training(const Mlp& model, const Dataset2D& ds, const MlpSpec& spec, std::size_t steps,
                         double target_accuracy, std::size_t min_steps, const TrainObserver& observer) {
  spec.validate();
  model.validate();
  ds.validate();
  require(model.features == spec.features, ErrorKind::invalid, "network features differ from the training configuration");
  TrainResult r{model, {}};
  if (steps == 0) return r;
  const std::vector<std::size_t> split = training_split(ds, spec);
  require(!split.empty(), ErrorKind::invalid, "training split is empty");
  std::vector<std::size_t> order = split;

  std::vector<double> theta = parameters(r.model), grad;
  r.losses.reserve(steps);
  std::size_t step = 0;
  for (std::uint64_t epoch = 0; step < steps; ++epoch) {
    Rng rng(derive_seed(spec.seed, epoch));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && step < steps; start += spec.batch_size, ++step) {
      const std::size_t len = std::min(spec.batch_size, order.size() - start);
      const double loss = loss_and_gradient(r.model, ds, std::span(order).subspan(start, len), spec.regularization,
                                            spec.regularization_rate, &grad);
      if (!std::isfinite(loss)) fail(ErrorKind::numeric, "training diverged at step " + std::to_string(step));
      r.losses.push_back(loss);
      simd::axpy(-spec.learning_rate, grad, theta);
      set_parameters(r.model, theta);
      if (observer && !observer(step, loss)) fail(ErrorKind::conflict, "training cancelled at step " + std::to_string(step));
    }
    if (target_accuracy <= 1.0 && step >= min_steps && accuracy(r.model, ds, split) >= target_accuracy) break;
  }
  return r;
}

}  // namespace

TrainResult train(const Mlp& model, const Dataset2D& ds, const MlpSpec& spec, std::size_t steps,
                  const TrainObserver& observer) {
  return run_training(model, ds, spec, steps, 2.0, 0, observer);
}

TrainResult train_until_accuracy(const Mlp& model, const Dataset2D& ds, const MlpSpec& spec,
                                 double target_accuracy, std::size_t max_steps, std::size_t min_steps) {
  require(target_accuracy >= 0.0 && target_accuracy <= 1.0, ErrorKind::invalid, "target accuracy must lie in [0,1]");
  return run_training(model, ds, spec, max_steps, target_accuracy, min_steps, {});
}

double accuracy(const Mlp& m, const Dataset2D& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i : indices) ok += predict_label(m, ds.points[i]) == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(indices.size());
}

double accuracy(const Mlp& m, const Dataset2D& ds) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return accuracy(m, ds, all);
}

Mlp permute_hidden_units(const Mlp& m, std::size_t layer, std::span<const std::size_t> perm) {
  require(layer < m.hidden_layers(), ErrorKind::invalid, "not a hidden layer");
  const DenseLayer& L = m.layers[layer];
  require(perm.size() == L.out, ErrorKind::invalid, "permutation size differs from layer width");
  std::vector<bool> seen(L.out, false);
  for (auto p : perm) {
    require(p < L.out && !seen[p], ErrorKind::invalid, "not a permutation");
    seen[p] = true;
  }
  Mlp out = m;
  DenseLayer& A = out.layers[layer];
  DenseLayer& B = out.layers[layer + 1];
  const DenseLayer& B0 = m.layers[layer + 1];
  for (std::size_t k = 0; k < L.out; ++k) {
    std::copy_n(L.weights.begin() + static_cast<std::ptrdiff_t>(perm[k] * L.in), L.in,
                A.weights.begin() + static_cast<std::ptrdiff_t>(k * L.in));
    A.bias[k] = L.bias[perm[k]];
    for (std::size_t o = 0; o < B.out; ++o) B.weights[o * B.in + k] = B0.weights[o * B0.in + perm[k]];
  }
  return out;
}

ModelContainer mlp_to_container(const Mlp& m) {
  m.validate();
  ModelContainer c;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DenseLayer& L = m.layers[l];
    c.add({"layers." + std::to_string(l) + ".weight", DType::f64, {L.out, L.in}, L.weights});
    c.add({"layers." + std::to_string(l) + ".bias", DType::f64, {L.out}, L.bias});
  }
  c.set_metadata("kind", "mlp");
  c.set_metadata("features", feature_list_name(m.features));
  c.set_metadata("activation", activation_name(m.activation));
  return c;
}

Mlp mlp_from_container(const ModelContainer& c) {
  Mlp m;
  m.features = parse_feature_list(c.metadata_or("features", ""));
  m.activation = parse_activation(c.metadata_or("activation", "tanh"));
  for (std::size_t l = 0;; ++l) {
    const std::string base = "layers." + std::to_string(l);
    if (!c.contains(base + ".weight")) break;
    const TensorRecord& w = get_tensor(c, base + ".weight");
    const TensorRecord& b = get_tensor(c, base + ".bias");
    require(w.rank() == 2 && b.rank() == 1 && b.shape[0] == w.shape[0], ErrorKind::data,
            "layer " + std::to_string(l) + " has inconsistent shapes");
    m.layers.push_back({w.shape[1], w.shape[0], w.data, b.data});
  }
  m.validate();
  return m;
}

std::vector<Feature> parse_feature_list(const std::string& s) {
  std::vector<Feature> out;
  std::istringstream in(s);
  for (std::string f; std::getline(in, f, ',');) out.push_back(parse_feature(f));
  return out;
}

std::string feature_list_name(const std::vector<Feature>& fs) {
  std::string s;
  for (std::size_t i = 0; i < fs.size(); ++i) s += (i ? "," : "") + std::string(feature_name(fs[i]));
  return s;
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  for (std::string f; std::getline(in, f, ',');) {
    require(!f.empty() && f.find_first_not_of("0123456789") == std::string::npos, ErrorKind::invalid,
            "hidden layer sizes must be positive integers: " + s);
    out.push_back(std::stoul(f));
  }
  return out;
}

std::string hidden_name(const std::vector<std::size_t>& h) {
  std::string s;
  for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "," : "") + std::to_string(h[i]);
  return s;
}

}  // namespace nnf::playground
