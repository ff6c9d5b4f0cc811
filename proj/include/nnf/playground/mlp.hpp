#pragma once
// Tiny fully connected network over engineered 2D features with a single
// output logit, trained by minibatch SGD on the mean logistic loss.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nnf/playground/dataset.hpp"
#include "nnf/tensor_store.hpp"

namespace nnf::playground {

enum class Feature { x1, x2, x1_sq, x2_sq, x1_x2, sin_x1, sin_x2, sin_x1_x2, sin_r2, x1_plus_x2 };
enum class Activation { tanh, relu, sigmoid };
enum class Regularization { none, l1, l2 };

const char* feature_name(Feature f);
Feature parse_feature(const std::string& s);
const char* activation_name(Activation a);
Activation parse_activation(const std::string& s);
const char* regularization_name(Regularization r);
Regularization parse_regularization(const std::string& s);

// Comma-separated lists, e.g. "x1,x2,x1*x2" and "4,2".
std::vector<Feature> parse_feature_list(const std::string& s);
std::string feature_list_name(const std::vector<Feature>& fs);
std::vector<std::size_t> parse_hidden(const std::string& s);
std::string hidden_name(const std::vector<std::size_t>& h);

inline constexpr std::size_t kMaxHiddenLayers = 6;
inline constexpr std::size_t kMaxNodesPerLayer = 9;

struct MlpSpec {
  std::vector<Feature> features{Feature::x1, Feature::x2};
  std::vector<std::size_t> hidden{4, 2};
  Activation activation = Activation::tanh;
  double learning_rate = 0.03;
  Regularization regularization = Regularization::none;
  double regularization_rate = 0.0;
  double train_ratio = 0.5;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

// weights is (out x in) row-major.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  bool operator==(const DenseLayer&) const = default;
};

struct Mlp {
  std::vector<Feature> features;
  Activation activation = Activation::tanh;
  std::vector<DenseLayer> layers;  // hidden layers then the 1-unit output layer

  std::size_t hidden_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t parameter_count() const;
  bool same_architecture(const Mlp& o) const;
  void validate() const;
  bool operator==(const Mlp&) const = default;
};

std::vector<double> feature_vector(std::span<const Feature> features, Point2 p);

// Weights U(-0.5, 0.5), biases 0.1.
Mlp init_mlp(const MlpSpec& spec, std::uint64_t seed);

double activate(Activation a, double z);

// Post-activation outputs of every hidden layer, then the output logit as a
// 1-element vector.
std::vector<std::vector<double>> forward_trace(const Mlp& m, Point2 p);
double logit(const Mlp& m, Point2 p);
double predict_proba(const Mlp& m, Point2 p);
int predict_label(const Mlp& m, Point2 p);  // P iff logit > 0

// Parameters flattened layer by layer as weights then bias.
std::vector<double> parameters(const Mlp& m);
void set_parameters(Mlp& m, std::span<const double> theta);

// Mean logistic loss over the batch plus the weight penalty; gradient has the
// parameters() layout.
double loss_and_gradient(const Mlp& m, const Dataset2D& ds, std::span<const std::size_t> batch,
                         Regularization reg, double reg_rate, std::vector<double>* grad);

// Seeded split stratified by label: round(train_ratio * count) points of each
// class, returned in ascending index order.
std::vector<std::size_t> train_indices(const Dataset2D& ds, double train_ratio, std::uint64_t seed);
// The split train() uses for this spec.
std::vector<std::size_t> training_split(const Dataset2D& ds, const MlpSpec& spec);

struct TrainResult {
  Mlp model;
  std::vector<double> losses;  // minibatch loss before each update
};

// Called after each update with the step index and its minibatch loss;
// returning false cancels training with a conflict error.
using TrainObserver = std::function<bool(std::size_t step, double loss)>;

// `steps` minibatch updates over the training split; each epoch reshuffles
// with a seed derived from spec.seed. Throws a numeric error naming the step
// when the loss stops being finite. The observer does not affect the result.
TrainResult train(const Mlp& model, const Dataset2D& ds, const MlpSpec& spec, std::size_t steps,
                  const TrainObserver& observer = {});

// Same schedule as train(), stopping at the first epoch end past min_steps
// where accuracy on the training split reaches target_accuracy, or after
// max_steps.
TrainResult train_until_accuracy(const Mlp& model, const Dataset2D& ds, const MlpSpec& spec,
                                 double target_accuracy, std::size_t max_steps, std::size_t min_steps = 0);

double accuracy(const Mlp& m, const Dataset2D& ds, std::span<const std::size_t> indices);
double accuracy(const Mlp& m, const Dataset2D& ds);

// Reorders hidden layer `layer`'s units: new unit k is old unit perm[k].
// The network function is unchanged.
Mlp permute_hidden_units(const Mlp& m, std::size_t layer, std::span<const std::size_t> perm);

// Tensors "layers.<i>.weight" (out x in) and "layers.<i>.bias"; metadata
// carries features and activation.
ModelContainer mlp_to_container(const Mlp& m);
Mlp mlp_from_container(const ModelContainer& c);

}  // namespace nnf::playground
