#include "nnf/playground/round.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/parallel.hpp"
#include "nnf/random.hpp"

namespace nnf::playground {

namespace fs = std::filesystem;

namespace {

enum : std::uint64_t {
  kRefData = 1,
  kRefInit = 2,
  kRefSchedule = 3,
  kLabelOrder = 7,
  kSplitOrder = 8,
  kModelBase = 1000,
};

std::string model_id(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id-%08zu", k);
  return buf;
}

void train_member(RoundModel& rm, const Mlp& reference, const RoundConfig& cfg) {
  for (std::size_t attempt = 0; attempt < cfg.retry_budget; ++attempt) {
    const std::uint64_t s = derive_seed(rm.seed, attempt);
    Dataset2D ds = generate_dataset(cfg.dataset, cfg.points, cfg.noise, derive_seed(s, 1));
    if (rm.label == 1) {
      try {
        ds = embed_trojan(ds, trojan_fixture(rm.trojan));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::invalid) throw;
        continue;  // the regenerated points missed the trojan region
      }
    }
    MlpSpec spec = cfg.spec;
    spec.seed = derive_seed(s, 2);
    Mlp m = train(reference, ds, spec, cfg.steps).model;

    const std::vector<std::size_t> split = training_split(ds, spec);
    std::vector<std::size_t> clean_idx;
    for (std::size_t i : split)
      if (!ds.trojaned[i]) clean_idx.push_back(i);
    const double acc = accuracy(m, ds, clean_idx);
    const double asr = attack_success_rate(m, ds, split);
    rm.attempts = attempt + 1;
    rm.train_accuracy = acc;
    rm.asr = asr;
    if (acc >= cfg.min_train_accuracy && (rm.label == 0 || asr >= cfg.min_asr)) {
      rm.model = std::move(m);
      return;
    }
  }
  fail(ErrorKind::numeric, "model " + rm.id + " missed its accuracy/ASR targets within " +
                               std::to_string(cfg.retry_budget) + " attempts");
}

}  // namespace

void RoundConfig::validate() const {
  require(clean >= 2 && poisoned >= 2, ErrorKind::invalid, "a round needs at least 2 models per arm");
  require(!trojans.empty(), ErrorKind::invalid, "at least one trojan fixture is required");
  for (const auto& t : trojans) {
    const TrojanSpec spec = trojan_fixture(t);
    spec.validate();
    require(spec.dataset == dataset, ErrorKind::invalid,
            "trojan " + t + " belongs to the " + dataset_kind_name(spec.dataset) + " dataset");
  }
  spec.validate();
  require(retry_budget >= 1, ErrorKind::invalid, "retry budget must be positive");
  require(train_fraction > 0.0 && test_fraction >= 0.0 && train_fraction + test_fraction <= 1.0 + 1e-12,
          ErrorKind::invalid, "split fractions must be non-negative and sum to at most 1");
}

double attack_success_rate(const Mlp& m, const Dataset2D& poisoned, std::span<const std::size_t> indices) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i : indices) {
    if (!poisoned.trojaned[i]) continue;
    ++total;
    hit += predict_label(m, poisoned.points[i]) == poisoned.labels[i];
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Round generate_round(const RoundConfig& cfg) {
  cfg.validate();
  Round r;
  {
    const Dataset2D ds = generate_dataset(cfg.dataset, cfg.points, cfg.noise, derive_seed(cfg.seed, kRefData));
    MlpSpec spec = cfg.spec;
    spec.seed = derive_seed(cfg.seed, kRefSchedule);
    r.reference = train(init_mlp(spec, derive_seed(cfg.seed, kRefInit)), ds, spec, cfg.reference_steps).model;
  }

  const std::size_t total = cfg.clean + cfg.poisoned;
  std::vector<int> labels(cfg.clean, 0);
  labels.resize(total, 1);
  Rng order(derive_seed(cfg.seed, kLabelOrder));
  order.shuffle(labels);

  r.models.resize(total);
  std::size_t poisoned_seen = 0;
  for (std::size_t k = 0; k < total; ++k) {
    RoundModel& rm = r.models[k];
    rm.id = model_id(k);
    rm.label = labels[k];
    rm.seed = derive_seed(cfg.seed, kModelBase + k);
    if (rm.label == 1) rm.trojan = cfg.trojans[poisoned_seen++ % cfg.trojans.size()];
  }

  Rng split_rng(derive_seed(cfg.seed, kSplitOrder));
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < total; ++k)
      if (labels[k] == label) idx.push_back(k);
    split_rng.shuffle(idx);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * n));
    const auto n_test = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(cfg.test_fraction * n)));
    for (std::size_t j = 0; j < idx.size(); ++j)
      r.models[idx[j]].split = j < n_train ? "train" : j < n_train + n_test ? "test" : "holdout";
  }

  parallel_for(total, cfg.threads, [&](std::size_t k) { train_member(r.models[k], r.reference, cfg); });
  return r;
}

void write_round(const Round& r, const RoundConfig& cfg, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "reference");
  {
    ModelContainer c = mlp_to_container(r.reference);
    c.set_metadata("model_id", "reference");
    save_container(c, (root / "reference" / "model.nnf").string());
  }
  csv::Table truth{{"model_id", "label"}, {}};
  csv::Table splits{{"model_id", "split"}, {}};
  for (const auto& m : r.models) {
    const fs::path mdir = root / "models" / m.id;
    fs::create_directories(mdir);
    ModelContainer c = mlp_to_container(m.model);
    c.set_metadata("model_id", m.id);
    c.set_metadata("label", std::to_string(m.label));
    c.set_metadata("trojan", m.trojan.empty() ? "none" : m.trojan);
    c.set_metadata("seed", std::to_string(m.seed));
    save_container(c, (mdir / "model.nnf").string());

    std::string conf;
    auto kv = [&conf](const std::string& k, const std::string& v) { conf += k + "=" + v + "\n"; };
    kv("model_id", m.id);
    kv("label", std::to_string(m.label));
    kv("trojan", m.trojan.empty() ? "none" : m.trojan);
    kv("seed", std::to_string(m.seed));
    kv("attempts", std::to_string(m.attempts));
    kv("train_accuracy", csv::format_double(m.train_accuracy));
    kv("asr", csv::format_double(m.asr));
    kv("split", m.split);
    kv("dataset", dataset_kind_name(cfg.dataset));
    kv("points", std::to_string(cfg.points));
    kv("noise", csv::format_double(cfg.noise));
    kv("steps", std::to_string(cfg.steps));
    kv("features", feature_list_name(cfg.spec.features));
    kv("hidden", hidden_name(cfg.spec.hidden));
    kv("activation", activation_name(cfg.spec.activation));
    kv("learning_rate", csv::format_double(cfg.spec.learning_rate));
    kv("batch_size", std::to_string(cfg.spec.batch_size));
    csv::write_file((mdir / "config.txt").string(), conf);

    truth.rows.push_back({m.id, std::to_string(m.label)});
    splits.rows.push_back({m.id, m.split});
  }
  csv::write_file((root / "ground_truth.csv").string(), csv::format(truth));
  csv::write_file((root / "splits.csv").string(), csv::format(splits));
}

RoundIndex read_round_index(const std::string& dir) {
  const fs::path root(dir);
  const csv::Table truth = csv::parse(csv::read_file((root / "ground_truth.csv").string()));
  const csv::Table splits = csv::parse(csv::read_file((root / "splits.csv").string()));
  std::map<std::string, std::string> split_of;
  for (const auto& row : splits.rows) split_of[row.at(splits.column("model_id"))] = row.at(splits.column("split"));
  RoundIndex idx;
  idx.reference_path = (root / "reference" / "model.nnf").string();
  for (const auto& row : truth.rows) {
    const std::string& id = row.at(truth.column("model_id"));
    const std::string& label = row.at(truth.column("label"));
    require(label == "0" || label == "1", ErrorKind::data, "ground truth label must be 0 or 1");
    auto it = split_of.find(id);
    require(it != split_of.end(), ErrorKind::data, "model " + id + " has no split");
    idx.ids.push_back(id);
    idx.labels.push_back(label == "1" ? 1 : 0);
    idx.splits.push_back(it->second);
    idx.model_paths.push_back((root / "models" / id / "model.nnf").string());
  }
  return idx;
}

}  // namespace nnf::playground
