#pragma once
// Reproducible calculator experiments: per-layer inefficiency tables, the
// sensitivity of modified KL to regeneration/retraining/no-training, and the
// clean-vs-trojaned delta signature.

#include <cstdint>
#include <string>
#include <vector>

#include "nnf/playground/dataset.hpp"
#include "nnf/playground/mlp.hpp"
#include "nnf/playground/states.hpp"

namespace nnf::playground {

struct InefficiencyRow {
  std::size_t layer = 0;
  std::size_t nodes = 0;
  int cls = kP;
  std::size_t points = 0;
  std::size_t distinct_states = 0;
  double modified_kl = 0.0;
  bool insufficient = false;
  Utilization util;
};

// Rows ordered by layer, then class N before P.
std::vector<InefficiencyRow> inefficiency_table(const StateHistogram& h);
std::string inefficiency_csv(const std::vector<InefficiencyRow>& rows);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::circle;
  std::size_t points = 400;
  double noise = 0.0;
};

// Mean over (layer, class) of the sample standard deviation of modified KL
// across repeats; repeat r measures models[r] on datasets[r].
double mean_kl_std(const std::vector<Mlp>& models, const std::vector<Dataset2D>& datasets,
                   const StateOptions& opt = {});

struct SensitivityConfig {
  MlpSpec spec;
  DatasetConfig data;
  std::size_t repeats = 4;
  std::size_t steps = 3000;
  std::uint64_t seed = 0;
  StateOptions states;
};

struct SensitivityResult {
  double regeneration = 0.0;  // one trained model, regenerated datasets
  double retraining = 0.0;    // fixed dataset, independently initialized trained models
  double no_training = 0.0;   // fixed dataset, independently initialized untrained models
};

SensitivityResult sensitivity_suite(const SensitivityConfig& cfg);

// 6 hidden layers of 8 tanh units over x1, x2, x1^2, x2^2, x1*x2; lr 0.03,
// batch 10, half the points for training.
MlpSpec trojan_experiment_spec();

struct SignatureConfig {
  MlpSpec spec = trojan_experiment_spec();
  DatasetConfig data;
  TrojanSpec trojan = trojan_fixture("T1");
  std::size_t min_steps = 0;
  std::size_t max_steps = 20000;
  double target_accuracy = 0.99;
  double sigma = kDefaultSigma;
  std::uint64_t seed = 0;
  StateOptions states;
};

struct SignatureResult {
  std::vector<LayerDelta> deltas;
  LayerDelta mean;  // over hidden layers
  Verdict verdict = Verdict::not_detectable;
  double clean_train_accuracy = 0.0;
  double trojaned_train_accuracy = 0.0;
  std::size_t clean_steps = 0;
  std::size_t trojaned_steps = 0;
};

// Trains a clean model and a trojaned model from the same initialization and
// compares their modified KL on the clean dataset.
SignatureResult trojan_signature(const SignatureConfig& cfg);

}  // namespace nnf::playground
