#pragma once
// Desk-scale detection rounds: populations of clean and trojaned tiny MLPs,
// each fine-tuned from one shared clean reference network, written with
// ground truth and a train/test/holdout split.
//
// Directory layout:
//   reference/model.nnf            shared starting network
//   models/<id>/model.nnf          trained network
//   models/<id>/config.txt         key=value description of the model
//   ground_truth.csv               model_id,label (1 = poisoned)
//   splits.csv                     model_id,split

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnf/playground/dataset.hpp"
#include "nnf/playground/experiments.hpp"
#include "nnf/playground/mlp.hpp"

namespace nnf::playground {

struct RoundConfig {
  std::size_t clean = 40;
  std::size_t poisoned = 40;
  DatasetKind dataset = DatasetKind::circle;
  std::size_t points = 400;
  double noise = 0.0;
  std::vector<std::string> trojans{"T1", "T2", "T3", "T5"};  // cycled over poisoned models
  MlpSpec spec = trojan_experiment_spec();
  std::size_t reference_steps = 4000;
  std::size_t steps = 3000;
  double min_train_accuracy = 0.9;  // on the clean points of the training split
  double min_asr = 0.9;             // on relabeled training points
  std::size_t retry_budget = 8;
  double train_fraction = 0.6;
  double test_fraction = 0.2;  // holdout gets the rest
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct RoundModel {
  std::string id;
  int label = 0;  // 1 = poisoned
  std::string trojan;  // empty when clean
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
  double train_accuracy = 0.0;
  double asr = 0.0;
  std::string split;
  Mlp model;
};

struct Round {
  Mlp reference;
  std::vector<RoundModel> models;  // clean first, then poisoned; ids are in this order
};

// Deterministic for a given config regardless of thread count.
Round generate_round(const RoundConfig& cfg);
void write_round(const Round& r, const RoundConfig& cfg, const std::string& dir);

struct RoundIndex {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::string> splits;
  std::vector<std::string> model_paths;
  std::string reference_path;
};

RoundIndex read_round_index(const std::string& dir);

// Fraction of relabeled points of the training split predicted as their
// trojan target; 1 when the split has none.
double attack_success_rate(const Mlp& m, const Dataset2D& poisoned, std::span<const std::size_t> indices);

}  // namespace nnf::playground
