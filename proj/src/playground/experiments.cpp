#include "nnf/playground/experiments.hpp"

#include <cmath>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/random.hpp"

namespace nnf::playground {

namespace {

// Stream identifiers for derive_seed; fixed so results are stable.
enum : std::uint64_t {
  kBaseData = 1,
  kBaseInit = 2,
  kBaseTrain = 3,
  kRegenData = 100,
  kRetrainInit = 200,
  kRetrainSchedule = 300,
  kUntrainedInit = 400,
};

}  // namespace

std::vector<InefficiencyRow> inefficiency_table(const StateHistogram& h) {
  std::vector<InefficiencyRow> rows;
  for (std::size_t l = 0; l < h.layers(); ++l) {
    for (int cls : {kN, kP}) {
      const std::size_t c = static_cast<std::size_t>(cls);
      if (h.class_points[c] == 0) continue;
      InefficiencyRow r;
      r.layer = l;
      r.nodes = h.nodes[l];
      r.cls = cls;
      r.points = h.class_points[c];
      r.distinct_states = h.counts[l][c].size();
      r.modified_kl = modified_kl(h, l, cls);
      r.insufficient = insufficient(h, l, cls);
      r.util = utilization(h, l, cls);
      rows.push_back(r);
    }
  }
  return rows;
}

std::string inefficiency_csv(const std::vector<InefficiencyRow>& rows) {
  csv::Table t;
  t.header = {"layer", "nodes", "class", "points", "distinct_states", "modified_kl", "insufficient",
              "eta_state", "eta_h", "eta_kl"};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.layer), std::to_string(r.nodes), r.cls == kP ? "P" : "N",
                      std::to_string(r.points), std::to_string(r.distinct_states), csv::format_double(r.modified_kl),
                      r.insufficient ? "1" : "0", csv::format_double(r.util.eta_state),
                      csv::format_double(r.util.eta_h), csv::format_double(r.util.eta_kl)});
  return csv::format(t);
}

double mean_kl_std(const std::vector<Mlp>& models, const std::vector<Dataset2D>& datasets, const StateOptions& opt) {
  require(models.size() == datasets.size(), ErrorKind::invalid, "one dataset per model is required");
  require(models.size() >= 2, ErrorKind::invalid, "at least 2 repeats are required");
  std::vector<StateHistogram> hs;
  for (std::size_t r = 0; r < models.size(); ++r) hs.push_back(capture_states(models[r], datasets[r], opt));
  const std::size_t layers = hs[0].layers();
  for (const auto& h : hs) require(h.layers() == layers, ErrorKind::conflict, "models differ in architecture");

  double total = 0.0;
  std::size_t cells = 0;
  const double k = static_cast<double>(hs.size());
  for (std::size_t l = 0; l < layers; ++l) {
    for (int cls : {kN, kP}) {
      // Welford: identical repeats give exactly 0.
      double mean = 0.0, ss = 0.0, seen = 0.0;
      for (const auto& h : hs) {
        const double x = modified_kl(h, l, cls);
        seen += 1.0;
        const double d = x - mean;
        mean += d / seen;
        ss += d * (x - mean);
      }
      total += std::sqrt(ss / (k - 1.0));
      ++cells;
    }
  }
  return total / static_cast<double>(cells);
}

SensitivityResult sensitivity_suite(const SensitivityConfig& cfg) {
  require(cfg.repeats >= 2, ErrorKind::invalid, "sensitivity needs at least 2 repeats");
  const auto& d = cfg.data;
  const Dataset2D base = generate_dataset(d.kind, d.points, d.noise, derive_seed(cfg.seed, kBaseData));

  auto trained = [&](std::uint64_t init_seed, std::uint64_t schedule_seed) {
    MlpSpec spec = cfg.spec;
    spec.seed = schedule_seed;
    return train(init_mlp(spec, init_seed), base, spec, cfg.steps).model;
  };

  SensitivityResult r;
  {
    const Mlp m = trained(derive_seed(cfg.seed, kBaseInit), derive_seed(cfg.seed, kBaseTrain));
    std::vector<Mlp> models(cfg.repeats, m);
    std::vector<Dataset2D> data;
    for (std::size_t i = 0; i < cfg.repeats; ++i)
      data.push_back(generate_dataset(d.kind, d.points, d.noise, derive_seed(cfg.seed, kRegenData + i)));
    r.regeneration = mean_kl_std(models, data, cfg.states);
  }
  {
    std::vector<Mlp> models;
    for (std::size_t i = 0; i < cfg.repeats; ++i)
      models.push_back(trained(derive_seed(cfg.seed, kRetrainInit + i), derive_seed(cfg.seed, kRetrainSchedule + i)));
    r.retraining = mean_kl_std(models, std::vector<Dataset2D>(cfg.repeats, base), cfg.states);
  }
  {
    std::vector<Mlp> models;
    for (std::size_t i = 0; i < cfg.repeats; ++i)
      models.push_back(init_mlp(cfg.spec, derive_seed(cfg.seed, kUntrainedInit + i)));
    r.no_training = mean_kl_std(models, std::vector<Dataset2D>(cfg.repeats, base), cfg.states);
  }
  return r;
}

MlpSpec trojan_experiment_spec() {
  MlpSpec s;
  s.features = {Feature::x1, Feature::x2, Feature::x1_sq, Feature::x2_sq, Feature::x1_x2};
  s.hidden = {8, 8, 8, 8, 8, 8};
  s.activation = Activation::tanh;
  s.learning_rate = 0.03;
  s.regularization = Regularization::none;
  s.train_ratio = 0.5;
  s.batch_size = 10;
  return s;
}

SignatureResult trojan_signature(const SignatureConfig& cfg) {
  const TrojanSpec& trojan = cfg.trojan;
  trojan.validate();
  require(trojan.dataset == cfg.data.kind, ErrorKind::invalid,
          "trojan " + trojan.id + " belongs to the " + dataset_kind_name(trojan.dataset) + " dataset");
  const Dataset2D clean =
      generate_dataset(cfg.data.kind, cfg.data.points, cfg.data.noise, derive_seed(cfg.seed, kBaseData));
  const Dataset2D poisoned = embed_trojan(clean, trojan);

  MlpSpec spec = cfg.spec;
  spec.seed = derive_seed(cfg.seed, kBaseTrain);
  const Mlp init = init_mlp(spec, derive_seed(cfg.seed, kBaseInit));
  const TrainResult a = train_until_accuracy(init, clean, spec, cfg.target_accuracy, cfg.max_steps, cfg.min_steps);
  const TrainResult b = train_until_accuracy(init, poisoned, spec, cfg.target_accuracy, cfg.max_steps, cfg.min_steps);

  SignatureResult r;
  r.clean_train_accuracy = accuracy(a.model, clean, training_split(clean, spec));
  r.trojaned_train_accuracy = accuracy(b.model, poisoned, training_split(poisoned, spec));
  r.clean_steps = a.losses.size();
  r.trojaned_steps = b.losses.size();
  r.deltas = kl_delta(a.model, b.model, clean, cfg.states);
  r.mean = mean_hidden_delta(r.deltas, a.model.hidden_layers());
  r.verdict = quadrant(r.mean.delta_p, r.mean.delta_n, cfg.sigma);
  return r;
}

}  // namespace nnf::playground
