// Batch entry point. Every run is fully described by its flags (optionally
// read from a key=value file, flags winning) and writes a JSON run manifest
// next to its artifacts. Exit codes: 0 ok, 2 usage, 3 data, 4 numeric.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "manifest.hpp"
#include "nnf/csv.hpp"
#include "nnf/ensemble.hpp"
#include "nnf/error.hpp"
#include "nnf/features.hpp"
#include "nnf/metrics.hpp"
#include "nnf/playground/dataset.hpp"
#include "nnf/playground/experiments.hpp"
#include "nnf/playground/mlp.hpp"
#include "nnf/playground/round.hpp"
#include "nnf/playground/states.hpp"
#include "nnf/random.hpp"
#include "nnf/service.hpp"
#include "nnf/tensor_store.hpp"
#include "nnf/vuln_stats.hpp"
#include "nnf/weight_classifier.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nnf;
namespace pg = nnf::playground;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
    case ErrorKind::invalid: return kExitUsage;
    case ErrorKind::numeric: return kExitNumeric;
    default: return kExitData;
  }
}

// What a command produced. Directories count as one artifact.
struct Outcome {
  std::vector<std::string> artifacts;
  std::string manifest;  // empty = no manifest (serve)
  json summary = json::object();
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> path;
  std::vector<std::string> inputs;  // option names holding input paths
  std::vector<std::string> seeds;   // option names holding seeds
  std::function<Outcome()> run;
};

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  csv::write_file(path, text);
}

std::string manifest_for_file(const std::string& out, const std::string& override_path) {
  return override_path.empty() ? out + ".manifest.json" : override_path;
}

std::string fmt(double v) { return csv::format_double(v); }

std::size_t detector_index(const DetectorOutputs& d, const std::string& name) {
  if (name.empty()) {
    require(d.detectors() > 0, ErrorKind::data, "score file has no detector columns");
    return 0;
  }
  auto it = std::find(d.detector_ids.begin(), d.detector_ids.end(), name);
  require(it != d.detector_ids.end(), ErrorKind::not_found, "no detector column " + name);
  return static_cast<std::size_t>(it - d.detector_ids.begin());
}

DetectorOutputs read_outputs(const std::string& path) {
  DetectorOutputs d = parse_detector_outputs(csv::read_file(path));
  d.validate();
  return d;
}

// ---- dataset and network options shared by the playground commands ----

struct PlaygroundOptions {
  std::string dataset = "circle";
  std::size_t points = 400;
  double noise = 0.0;
  std::optional<std::uint64_t> data_seed;
  std::string features = "x1,x2";
  std::string hidden = "4,2";
  std::string activation = "tanh";
  double learning_rate = 0.03;
  std::string regularization = "none";
  double regularization_rate = 0.0;
  double train_ratio = 0.5;
  std::size_t batch = 10;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "circle|xor|gauss|spiral")->capture_default_str();
    app->add_option("--points", points, "points, split evenly between classes")->capture_default_str();
    app->add_option("--noise", noise)->capture_default_str();
    app->add_option("--data-seed", data_seed, "dataset seed (defaults to --seed)");
    app->add_option("--features", features, "comma-separated input features")->capture_default_str();
    app->add_option("--hidden", hidden, "comma-separated hidden layer sizes")->capture_default_str();
    app->add_option("--activation", activation, "tanh|relu|sigmoid")->capture_default_str();
    app->add_option("--lr", learning_rate)->capture_default_str();
    app->add_option("--regularization", regularization, "none|l1|l2")->capture_default_str();
    app->add_option("--reg-rate", regularization_rate)->capture_default_str();
    app->add_option("--train-ratio", train_ratio)->capture_default_str();
    app->add_option("--batch", batch)->capture_default_str();
  }

  pg::MlpSpec spec(std::uint64_t seed) const {
    pg::MlpSpec s;
    s.features = pg::parse_feature_list(features);
    s.hidden = pg::parse_hidden(hidden);
    s.activation = pg::parse_activation(activation);
    s.learning_rate = learning_rate;
    s.regularization = pg::parse_regularization(regularization);
    s.regularization_rate = regularization_rate;
    s.train_ratio = train_ratio;
    s.batch_size = batch;
    s.seed = seed;
    s.validate();
    return s;
  }

  pg::Dataset2D data(std::uint64_t seed) const {
    return pg::generate_dataset(pg::parse_dataset_kind(dataset), points, noise, data_seed.value_or(seed));
  }
};

// ---- commands ----

Command round_gen(CLI::App& root) {
  auto* app = root.add_subcommand("round-gen", "generate a population of clean and trojaned networks");
  auto cfg = std::make_shared<pg::RoundConfig>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto dataset = std::make_shared<std::string>("circle");
  auto hidden = std::make_shared<std::string>();
  cfg->threads = 1;
  app->add_option("--clean", cfg->clean)->capture_default_str();
  app->add_option("--poisoned", cfg->poisoned)->capture_default_str();
  app->add_option("--seed", cfg->seed)->required();
  app->add_option("--dataset", *dataset)->capture_default_str();
  app->add_option("--points", cfg->points)->capture_default_str();
  app->add_option("--noise", cfg->noise)->capture_default_str();
  app->add_option("--trojans", cfg->trojans, "fixture ids cycled over poisoned models")->delimiter(',');
  app->add_option("--hidden", *hidden, "hidden layer sizes (default 8,8,8,8,8,8)");
  app->add_option("--steps", cfg->steps)->capture_default_str();
  app->add_option("--reference-steps", cfg->reference_steps)->capture_default_str();
  app->add_option("--min-train-accuracy", cfg->min_train_accuracy)->capture_default_str();
  app->add_option("--min-asr", cfg->min_asr)->capture_default_str();
  app->add_option("--retry-budget", cfg->retry_budget)->capture_default_str();
  app->add_option("--train-fraction", cfg->train_fraction)->capture_default_str();
  app->add_option("--test-fraction", cfg->test_fraction)->capture_default_str();
  app->add_option("--threads", cfg->threads, "0 = all cores; output does not depend on it")->capture_default_str();
  app->add_option("--out", *out, "output directory")->required();
  app->add_option("--manifest", *manifest, "manifest path (default <out>/manifest.json)");
  return {app, {"round-gen"}, {}, {"seed"}, [=] {
            cfg->dataset = pg::parse_dataset_kind(*dataset);
            if (!hidden->empty()) cfg->spec.hidden = pg::parse_hidden(*hidden);
            const pg::Round r = pg::generate_round(*cfg);
            pg::write_round(r, *cfg, *out);
            Outcome o;
            o.artifacts = {*out};
            o.manifest = manifest->empty() ? (fs::path(*out) / cli::kManifestName).string() : *manifest;
            std::size_t attempts = 0;
            for (const auto& m : r.models) attempts += m.attempts;
            o.summary = {{"models", r.models.size()}, {"attempts", attempts}};
            return o;
          }};
}

Command extract_features(CLI::App& root) {
  auto* app = root.add_subcommand("extract-features", "weight-statistics features of every model in a round");
  auto round = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto scope = std::make_shared<std::string>("global");
  auto flatten = std::make_shared<std::string>("rows");
  auto spec = std::make_shared<FeatureSpec>();
  app->add_option("--round", *round, "round directory")->required();
  app->add_option("--scope", *scope, "global|local")->capture_default_str();
  app->add_option("--flatten", *flatten, "rows|cols")->capture_default_str();
  app->add_option("--bins", spec->histogram_bins)->capture_default_str();
  app->add_option("--top-k", spec->top_k_singulars)->capture_default_str();
  app->add_option("--groups", spec->groups, "bit mask of feature groups")->capture_default_str();
  app->add_option("--out", *out, "features CSV")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"extract-features"}, {"round"}, {}, [=] {
            require(*scope == "global" || *scope == "local", ErrorKind::invalid, "scope must be global or local");
            require(*flatten == "rows" || *flatten == "cols", ErrorKind::invalid, "flatten must be rows or cols");
            spec->scope = *scope == "global" ? Scope::global : Scope::local;
            spec->flatten_mode = *flatten == "rows" ? FlattenMode::rows_first : FlattenMode::cols_first;
            spec->validate();
            const pg::RoundIndex idx = pg::read_round_index(*round);
            std::vector<FeatureVector> rows;
            for (std::size_t i = 0; i < idx.ids.size(); ++i)
              rows.push_back(extract_model_features(load_container(idx.model_paths[i]), *spec, idx.ids[i]));
            write_text(*out, features_to_csv(rows));
            Outcome o;
            o.artifacts = {*out};
            o.manifest = manifest_for_file(*out, *manifest);
            o.summary = {{"models", rows.size()}, {"features", rows.empty() ? 0 : rows[0].entries.size()}};
            return o;
          }};
}

std::vector<std::size_t> split_members(const pg::RoundIndex& idx, const std::string& split) {
  require(split == "train" || split == "test" || split == "holdout" || split == "all", ErrorKind::invalid,
          "split must be train, test, holdout or all");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < idx.ids.size(); ++i)
    if (split == "all" || idx.splits[i] == split) out.push_back(i);
  require(!out.empty(), ErrorKind::data, "the " + split + " split is empty");
  return out;
}

Command train_detector(CLI::App& root) {
  auto* app = root.add_subcommand("train-detector", "fit a linear weight-space detector on a round split");
  auto round = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto preset = std::make_shared<std::string>("Base");
  auto split = std::make_shared<std::string>("train");
  auto seed = std::make_shared<std::uint64_t>(0);
  auto top_tensors = std::make_shared<std::optional<std::size_t>>();
  auto top_weights = std::make_shared<std::optional<std::size_t>>();
  auto folds = std::make_shared<std::optional<std::size_t>>();
  auto l2 = std::make_shared<std::optional<double>>();
  app->add_option("--round", *round)->required();
  app->add_option("--preset", *preset, "Base or A..F")->capture_default_str();
  app->add_option("--split", *split, "train|test|holdout|all")->capture_default_str();
  app->add_option("--seed", *seed)->required();
  app->add_option("--top-tensors", *top_tensors);
  app->add_option("--top-weights", *top_weights);
  app->add_option("--folds", *folds);
  app->add_option("--l2", *l2, "L2 penalty of the logistic fit");
  app->add_option("--out", *out, "detector file")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"train-detector"}, {"round"}, {"seed"}, [=] {
            DetectorConfig cfg = DetectorConfig::from_preset(*preset);
            cfg.seed = *seed;
            if (*top_tensors) cfg.top_tensors = **top_tensors;
            if (*top_weights) cfg.top_weights = **top_weights;
            if (*folds) cfg.folds = **folds;
            if (*l2) cfg.l2_penalty = **l2;
            const pg::RoundIndex idx = pg::read_round_index(*round);
            std::vector<ModelContainer> models;
            std::vector<int> labels;
            for (std::size_t i : split_members(idx, *split)) {
              models.push_back(load_container(idx.model_paths[i]));
              labels.push_back(idx.labels[i]);
            }
            const ModelContainer reference = load_container(idx.reference_path);
            const LinearDetector d = fit_detector(models, labels, cfg, cfg.use_reference_model ? &reference : nullptr);
            ensure_parent(*out);
            save_container(detector_to_container(d), *out);
            Outcome o;
            o.artifacts = {*out};
            o.manifest = manifest_for_file(*out, *manifest);
            o.summary = {{"preset", cfg.preset},
                         {"models", models.size()},
                         {"selected_tensors", d.selected_tensors.size()},
                         {"selected_weights", d.selected_weights.size()}};
            return o;
          }};
}

Command score(CLI::App& root) {
  auto* app = root.add_subcommand("score", "trojan probabilities of round models under a detector");
  auto detector = std::make_shared<std::string>();
  auto round = std::make_shared<std::string>();
  auto split = std::make_shared<std::string>("test");
  auto name = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--detector", *detector)->required();
  app->add_option("--round", *round)->required();
  app->add_option("--split", *split, "train|test|holdout|all")->capture_default_str();
  app->add_option("--name", *name, "score column name (default linear_<preset>)");
  app->add_option("--out", *out, "score CSV: model_id, ground_truth, score")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"score"}, {"detector", "round"}, {}, [=] {
            const LinearDetector d = detector_from_container(load_container(*detector));
            const pg::RoundIndex idx = pg::read_round_index(*round);
            DetectorOutputs res;
            res.detector_ids = {name->empty() ? "linear_" + d.config.preset : *name};
            for (std::size_t i : split_members(idx, *split)) {
              res.model_ids.push_back(idx.ids[i]);
              res.truth.push_back(idx.labels[i]);
              res.values.push_back({predict_proba(d, load_container(idx.model_paths[i]))});
            }
            write_text(*out, format_detector_outputs(res));
            Outcome o;
            o.artifacts = {*out};
            o.manifest = manifest_for_file(*out, *manifest);
            o.summary = {{"models", res.models()}};
            return o;
          }};
}

Command metrics(CLI::App& root) {
  auto* app = root.add_subcommand("metrics", "detection metrics of one score column");
  auto scores = std::make_shared<std::string>();
  auto detector = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto threshold = std::make_shared<double>(0.5);
  app->add_option("--scores", *scores, "score CSV")->required();
  app->add_option("--detector", *detector, "column (default: the first)");
  app->add_option("--threshold", *threshold)->capture_default_str();
  app->add_option("--out", *out, "JSON report")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"metrics"}, {"scores"}, {}, [=] {
            const DetectorOutputs d = read_outputs(*scores);
            const std::size_t j = detector_index(d, *detector);
            const std::vector<double> p = d.column(j, 0.5);
            auto report = metrics_report(d.truth, p);
            const ThresholdMetrics t = threshold_metrics(d.truth, p, *threshold);
            report["acc"] = t.accuracy;
            report["prec"] = t.precision;
            report["rec"] = t.recall;
            report["f1"] = t.f1;
            json j_report{{"detector", d.detector_ids[j]}, {"models", d.models()}, {"threshold", *threshold}};
            for (const auto& [k, v] : report) j_report["metrics"][k] = v;
            write_text(*out, j_report.dump(2) + "\n");
            std::cout << format_report_kv(report);
            Outcome o;
            o.artifacts = {*out};
            o.manifest = manifest_for_file(*out, *manifest);
            o.summary = j_report["metrics"];
            return o;
          }};
}

struct EligibilityOptions {
  double ce_max = 0.44, auc_min = 0.85, coverage_min = 0.5;
  bool no_filter = false;
  void add(CLI::App* app) {
    app->add_option("--ce-max", ce_max)->capture_default_str();
    app->add_option("--auc-min", auc_min)->capture_default_str();
    app->add_option("--coverage-min", coverage_min)->capture_default_str();
    app->add_flag("--no-filter", no_filter, "use every detector");
  }
  std::vector<std::size_t> columns(const DetectorOutputs& d) const {
    if (no_filter) {
      std::vector<std::size_t> all(d.detectors());
      for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
      return all;
    }
    auto cols = filter_eligible(d, ce_max, auc_min, coverage_min);
    require(!cols.empty(), ErrorKind::data, "no detector passes the eligibility filter");
    return cols;
  }
};

std::vector<std::vector<double>> select_rows(const DetectorOutputs& sanitized, const std::vector<std::size_t>& cols) {
  std::vector<std::vector<double>> X(sanitized.models());
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j : cols) X[i].push_back(*sanitized.values[i][j]);
  return X;
}

// Test outputs restricted to the training columns, matched by name.
std::vector<std::vector<double>> test_rows(const DetectorOutputs& train, const std::vector<std::size_t>& cols,
                                           const DetectorOutputs& test_raw) {
  const DetectorOutputs test = sanitize(test_raw);
  std::vector<std::size_t> mapped;
  for (std::size_t j : cols) mapped.push_back(detector_index(test, train.detector_ids[j]));
  return select_rows(test, mapped);
}

void write_predictions(const std::string& path, const DetectorOutputs& test, const std::string& name,
                       const std::vector<double>& p) {
  DetectorOutputs out;
  out.model_ids = test.model_ids;
  out.truth = test.truth;
  out.detector_ids = {name};
  for (double v : p) out.values.push_back({v});
  write_text(path, format_detector_outputs(out));
}

Command ensemble_lasso(CLI::App& parent) {
  auto* app = parent.add_subcommand("lasso", "LASSO blend of eligible detectors");
  auto train = std::make_shared<std::string>();
  auto test = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto predictions = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto alpha = std::make_shared<double>(0.005);
  auto elig = std::make_shared<EligibilityOptions>();
  app->add_option("--train", *train, "detector outputs with ground truth")->required();
  app->add_option("--test", *test, "outputs to blend with the fitted weights");
  app->add_option("--alpha", *alpha)->capture_default_str();
  elig->add(app);
  app->add_option("--out", *out, "weights CSV")->required();
  app->add_option("--predictions", *predictions, "blended test scores (needs --test)");
  app->add_option("--manifest", *manifest);
  return {app, {"ensemble", "lasso"}, {"train", "test"}, {}, [=] {
            const DetectorOutputs d = read_outputs(*train);
            const auto cols = elig->columns(d);
            const LassoBlend b = fit_lasso_blend(select_rows(sanitize(d), cols), d.truth, *alpha);
            csv::Table t{{"detector", "weight"}, {}};
            t.rows.push_back({"(intercept)", fmt(b.intercept)});
            for (std::size_t k = 0; k < cols.size(); ++k) t.rows.push_back({d.detector_ids[cols[k]], fmt(b.weights[k])});
            write_text(*out, csv::format(t));
            Outcome o;
            o.artifacts = {*out};
            o.summary = {{"detectors", cols.size()}, {"sweeps", b.sweeps}, {"kkt_residual", b.kkt_residual}};
            if (!predictions->empty()) {
              require(!test->empty(), ErrorKind::usage, "--predictions needs --test");
              const DetectorOutputs td = read_outputs(*test);
              std::vector<double> p;
              for (const auto& row : test_rows(d, cols, td)) p.push_back(b.predict(row));
              write_predictions(*predictions, td, "lasso", p);
              o.artifacts.push_back(*predictions);
              o.summary["test_ce"] = cross_entropy(td.truth, p);
            }
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command ensemble_forest(CLI::App& parent) {
  auto* app = parent.add_subcommand("forest", "random forest over detector outputs");
  auto train = std::make_shared<std::string>();
  auto test = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto predictions = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto hp = std::make_shared<ForestParams>();
  auto max_features = std::make_shared<std::string>("sqrt");
  auto repeats = std::make_shared<std::size_t>(10);
  auto elig = std::make_shared<EligibilityOptions>();
  elig->no_filter = true;
  hp->threads = 1;
  app->add_option("--train", *train)->required();
  app->add_option("--test", *test);
  app->add_option("--trees", hp->n_trees)->capture_default_str();
  app->add_option("--depth", hp->max_depth)->capture_default_str();
  app->add_option("--max-features", *max_features, "sqrt|all")->capture_default_str();
  app->add_option("--seed", hp->seed)->required();
  app->add_option("--threads", hp->threads, "0 = all cores; output does not depend on it")->capture_default_str();
  app->add_option("--importance-repeats", *repeats)->capture_default_str();
  app->add_option("--out", *out, "permutation importance CSV")->required();
  app->add_option("--predictions", *predictions, "forest test scores (needs --test)");
  app->add_option("--manifest", *manifest);
  return {app, {"ensemble", "forest"}, {"train", "test"}, {"seed"}, [=] {
            require(*max_features == "sqrt" || *max_features == "all", ErrorKind::invalid,
                    "max-features must be sqrt or all");
            hp->max_features = *max_features == "sqrt" ? MaxFeatures::sqrt : MaxFeatures::all;
            const DetectorOutputs d = read_outputs(*train);
            const auto cols = elig->columns(d);
            const auto X = select_rows(sanitize(d), cols);
            const ForestModel f = fit_forest(X, d.truth, *hp);
            const auto imp = permutation_importance(f, X, d.truth, *repeats, derive_seed(hp->seed, 1));
            const auto used = f.split_features();
            csv::Table t{{"detector", "used", "importance"}, {}};
            for (std::size_t k = 0; k < cols.size(); ++k)
              t.rows.push_back({d.detector_ids[cols[k]], used[k] ? "1" : "0", fmt(imp[k])});
            write_text(*out, csv::format(t));
            const OobResult oob = oob_accuracy(f, X, d.truth);
            Outcome o;
            o.artifacts = {*out};
            o.summary = {{"oob_accuracy", oob.accuracy}, {"oob_covered", oob.covered}};
            if (!predictions->empty()) {
              require(!test->empty(), ErrorKind::usage, "--predictions needs --test");
              const DetectorOutputs td = read_outputs(*test);
              std::vector<double> p;
              for (const auto& row : test_rows(d, cols, td)) p.push_back(f.predict_proba(row));
              write_predictions(*predictions, td, "forest", p);
              o.artifacts.push_back(*predictions);
            }
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command ensemble_cluster(CLI::App& parent) {
  auto* app = parent.add_subcommand("cluster", "rank-distance clustering and tentative ensembles");
  auto scores = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto merges = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto max_size = std::make_shared<std::size_t>(0);
  auto replace = std::make_shared<std::vector<std::string>>();
  app->add_option("--scores", *scores)->required();
  app->add_option("--replace", *replace, "FROM=TO: swap detector FROM for TO from the same cluster");
  app->add_option("--max-size", *max_size, "largest ensemble (0 = every detector)")->capture_default_str();
  app->add_option("--out", *out, "tentative ensembles CSV")->required();
  app->add_option("--merges", *merges, "single-linkage merge CSV");
  app->add_option("--manifest", *manifest);
  return {app, {"ensemble", "cluster"}, {"scores"}, {}, [=] {
            const DetectorOutputs d = sanitize(read_outputs(*scores));
            std::vector<std::vector<double>> columns;
            for (std::size_t j = 0; j < d.detectors(); ++j) columns.push_back(d.column(j));
            const DistanceMatrix dm = detector_distance_matrix(columns);
            std::vector<double> ce;
            for (const auto& q : detector_quality(d)) ce.push_back(q.ce);
            const std::size_t k = *max_size == 0 ? d.detectors() : *max_size;
            csv::Table t{{"size", "members"}, {}};
            std::vector<EnsembleSwap> swaps;
            for (const auto& r : *replace) {
              const auto eq = r.find('=');
              require(eq != std::string::npos, ErrorKind::usage, "--replace expects FROM=TO, got '" + r + "'");
              const auto index = [&](const std::string& id) {
                const auto it = std::find(d.detector_ids.begin(), d.detector_ids.end(), id);
                require(it != d.detector_ids.end(), ErrorKind::data, "unknown detector '" + id + "'");
                return static_cast<std::size_t>(it - d.detector_ids.begin());
              };
              swaps.push_back({index(r.substr(0, eq)), index(r.substr(eq + 1))});
            }
            for (const auto& e : override_ensembles(dm.d, tentative_ensembles(dm.d, ce, k), swaps)) {
              std::string members;
              for (std::size_t j : e) members += (members.empty() ? "" : ";") + d.detector_ids[j];
              t.rows.push_back({std::to_string(e.size()), members});
            }
            write_text(*out, csv::format(t));
            Outcome o;
            o.artifacts = {*out};
            if (!merges->empty()) {
              csv::Table m{{"a", "b", "height"}, {}};
              for (const auto& x : single_linkage(dm.d))
                m.rows.push_back({d.detector_ids[x.a], d.detector_ids[x.b], fmt(x.height)});
              write_text(*merges, csv::format(m));
              o.artifacts.push_back(*merges);
            }
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command inefficiency(CLI::App& root) {
  auto* app = root.add_subcommand("inefficiency", "per-layer modified KL and utilization of a playground network");
  auto pg_opt = std::make_shared<PlaygroundOptions>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto steps = std::make_shared<std::size_t>(1000);
  auto trojan = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>();
  auto save_model = std::make_shared<std::string>();
  auto by_predicted = std::make_shared<bool>(false);
  auto exclude_output = std::make_shared<bool>(false);
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  pg_opt->add(app);
  app->add_option("--seed", *seed, "initialization and minibatch seed")->required();
  app->add_option("--steps", *steps)->capture_default_str();
  app->add_option("--trojan", *trojan, "fixture id embedded before training");
  app->add_option("--model", *model, "measure this network instead of training one");
  app->add_option("--save-model", *save_model, "write the trained network");
  app->add_flag("--by-predicted", *by_predicted, "key states by predicted class");
  app->add_flag("--exclude-output", *exclude_output, "leave the output logit out");
  app->add_option("--out", *out, "inefficiency CSV")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"inefficiency"}, {"model"}, {"seed", "data-seed"}, [=] {
            pg::Dataset2D ds = pg_opt->data(*seed);
            if (!trojan->empty()) ds = pg::embed_trojan(ds, pg::trojan_fixture(*trojan));
            Outcome o;
            pg::Mlp m;
            if (!model->empty()) {
              m = pg::mlp_from_container(load_container(*model));
            } else {
              const pg::MlpSpec spec = pg_opt->spec(*seed);
              m = pg::train(pg::init_mlp(spec, *seed), ds, spec, *steps).model;
              o.summary["train_accuracy"] = pg::accuracy(m, ds, pg::training_split(ds, spec));
            }
            const pg::StateOptions opt{*by_predicted, !*exclude_output};
            write_text(*out, pg::inefficiency_csv(pg::inefficiency_table(pg::capture_states(m, ds, opt))));
            o.artifacts = {*out};
            if (!save_model->empty()) {
              ensure_parent(*save_model);
              save_container(pg::mlp_to_container(m), *save_model);
              o.artifacts.push_back(*save_model);
            }
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command quadrant_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("quadrant", "clean-vs-trojaned modified KL deltas and their verdict");
  auto pg_opt = std::make_shared<PlaygroundOptions>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto trojan = std::make_shared<std::string>("T1");
  auto clean = std::make_shared<std::string>();
  auto trojaned = std::make_shared<std::string>();
  auto sigma = std::make_shared<double>(pg::kDefaultSigma);
  auto target = std::make_shared<double>(0.99);
  auto max_steps = std::make_shared<std::size_t>(20000);
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  pg_opt->hidden = "8,8,8,8,8,8";
  pg_opt->features = "x1,x2,x1^2,x2^2,x1*x2";
  pg_opt->add(app);
  app->add_option("--seed", *seed)->required();
  app->add_option("--trojan", *trojan)->capture_default_str();
  app->add_option("--clean", *clean, "clean network (with --trojaned: skip training)");
  app->add_option("--trojaned", *trojaned, "trojaned network");
  app->add_option("--sigma", *sigma)->capture_default_str();
  app->add_option("--target-accuracy", *target)->capture_default_str();
  app->add_option("--max-steps", *max_steps)->capture_default_str();
  app->add_option("--out", *out, "delta CSV")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"quadrant"}, {"clean", "trojaned"}, {"seed", "data-seed"}, [=] {
            std::vector<pg::LayerDelta> deltas;
            pg::LayerDelta mean;
            pg::Verdict verdict;
            Outcome o;
            if (!clean->empty() || !trojaned->empty()) {
              require(!clean->empty() && !trojaned->empty(), ErrorKind::usage, "--clean and --trojaned go together");
              const pg::Mlp a = pg::mlp_from_container(load_container(*clean));
              const pg::Mlp b = pg::mlp_from_container(load_container(*trojaned));
              deltas = pg::kl_delta(a, b, pg_opt->data(*seed));
              mean = pg::mean_hidden_delta(deltas, b.hidden_layers());
              verdict = pg::quadrant(mean.delta_p, mean.delta_n, *sigma);
            } else {
              pg::SignatureConfig cfg;
              cfg.spec = pg_opt->spec(*seed);
              cfg.data = {pg::parse_dataset_kind(pg_opt->dataset), pg_opt->points, pg_opt->noise};
              cfg.trojan = pg::trojan_fixture(*trojan);
              cfg.max_steps = *max_steps;
              cfg.target_accuracy = *target;
              cfg.sigma = *sigma;
              cfg.seed = *seed;
              const pg::SignatureResult r = pg::trojan_signature(cfg);
              deltas = r.deltas;
              mean = r.mean;
              verdict = r.verdict;
              o.summary = {{"clean_train_accuracy", r.clean_train_accuracy},
                           {"trojaned_train_accuracy", r.trojaned_train_accuracy},
                           {"clean_steps", r.clean_steps},
                           {"trojaned_steps", r.trojaned_steps}};
            }
            csv::Table t{{"layer", "delta_p", "delta_n", "verdict"}, {}};
            for (std::size_t l = 0; l < deltas.size(); ++l)
              t.rows.push_back({std::to_string(l), fmt(deltas[l].delta_p), fmt(deltas[l].delta_n), ""});
            t.rows.push_back({"mean_hidden", fmt(mean.delta_p), fmt(mean.delta_n), pg::verdict_name(verdict)});
            write_text(*out, csv::format(t));
            std::cout << "verdict=" << pg::verdict_name(verdict) << "\n";
            o.summary["verdict"] = pg::verdict_name(verdict);
            o.artifacts = {*out};
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command vuln_mc(CLI::App& parent) {
  auto* app = parent.add_subcommand("mc-test", "Monte-Carlo KS subset test");
  auto input = std::make_shared<std::string>();
  auto column = std::make_shared<std::string>();
  auto subset_column = std::make_shared<std::string>("subset");
  auto categorical = std::make_shared<bool>(false);
  auto cfg = std::make_shared<SubsetTestConfig>();
  auto out = std::make_shared<std::string>();
  auto nulls = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--input", *input, "CSV with a value column and a 0/1 subset column")->required();
  app->add_option("--column", *column, "value column")->required();
  app->add_option("--subset-column", *subset_column)->capture_default_str();
  app->add_flag("--categorical", *categorical, "compare category fractions instead of KS");
  app->add_option("--n-mc", cfg->n_mc)->capture_default_str();
  app->add_option("--pool", cfg->pool, "peers per average (0 = exact)")->capture_default_str();
  app->add_option("--threshold", cfg->threshold)->capture_default_str();
  app->add_option("--seed", cfg->seed)->required();
  app->add_option("--threads", cfg->threads)->capture_default_str();
  app->add_option("--out", *out, "result CSV")->required();
  app->add_option("--nulls", *nulls, "null distance CSV");
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "mc-test"}, {"input"}, {"seed"}, [=] {
            const csv::Table t = csv::parse(csv::read_file(*input));
            const std::size_t vc = t.column(*column), sc = t.column(*subset_column);
            std::vector<std::size_t> subset;
            std::vector<std::string> raw;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
              raw.push_back(t.rows[i].at(vc));
              const std::string& s = t.rows[i].at(sc);
              require(s == "0" || s == "1", ErrorKind::data, "subset column must hold 0 or 1");
              if (s == "1") subset.push_back(i);
            }
            SubsetTestResult r;
            if (*categorical) {
              r = mc_subset_test(raw, subset, *cfg);
            } else {
              std::vector<double> v;
              for (const auto& s : raw) v.push_back(csv::parse_double(s));
              r = mc_subset_test(v, subset, *cfg);
            }
            csv::Table res{{"statistic", "value"}, {}};
            res.rows = {{"subset_size", std::to_string(subset.size())},
                        {"subset_avg_distance", fmt(r.subset_avg_distance)},
                        {"percentile", fmt(r.percentile)},
                        {"significant", r.significant ? "1" : "0"}};
            write_text(*out, csv::format(res));
            Outcome o;
            o.artifacts = {*out};
            if (!nulls->empty()) {
              csv::Table n{{"draw", "avg_distance"}, {}};
              for (std::size_t k = 0; k < r.null_distances.size(); ++k)
                n.rows.push_back({std::to_string(k), fmt(r.null_distances[k])});
              write_text(*nulls, csv::format(n));
              o.artifacts.push_back(*nulls);
            }
            o.summary = {{"percentile", r.percentile}, {"significant", r.significant}};
            o.manifest = manifest_for_file(*out, *manifest);
            return o;
          }};
}

Command vuln_ace(CLI::App& parent) {
  auto* app = parent.add_subcommand("ace", "conditional ACE two-proportion z-score");
  auto c = std::make_shared<std::array<std::size_t, 4>>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--m", (*c)[0], "successes in the first group")->required();
  app->add_option("--n", (*c)[1], "size of the first group")->required();
  app->add_option("--m-prime", (*c)[2])->required();
  app->add_option("--n-prime", (*c)[3])->required();
  app->add_option("--out", *out)->required();
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "ace"}, {}, {}, [=] {
            const AceResult r = ace_zscore((*c)[0], (*c)[1], (*c)[2], (*c)[3]);
            csv::Table t{{"p", "p_prime", "pooled", "z", "valid"}, {}};
            t.rows.push_back({fmt(r.p), fmt(r.p_prime), fmt(r.pooled), fmt(r.z), r.valid ? "1" : "0"});
            write_text(*out, csv::format(t));
            return Outcome{{*out}, manifest_for_file(*out, *manifest), {{"z", r.z}, {"valid", r.valid}}};
          }};
}

Command vuln_sobol(CLI::App& parent) {
  auto* app = parent.add_subcommand("sobol", "Sobol indices of sum c_i x_i + c_prod prod x_i on the unit cube");
  auto coefficients = std::make_shared<std::vector<double>>();
  auto product = std::make_shared<double>(0.0);
  auto cfg = std::make_shared<SobolConfig>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--coefficients", *coefficients, "linear coefficients, one per input")->delimiter(',')->required();
  app->add_option("--product", *product, "coefficient of the product of all inputs")->capture_default_str();
  app->add_option("--n-base", cfg->n_base)->capture_default_str();
  app->add_option("--bootstrap", cfg->bootstrap)->capture_default_str();
  app->add_option("--seed", cfg->seed)->required();
  app->add_option("--threads", cfg->threads)->capture_default_str();
  app->add_option("--out", *out)->required();
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "sobol"}, {}, {"seed"}, [=] {
            const std::vector<double> c = *coefficients;
            const double prod = *product;
            auto f = [c, prod](std::span<const double> x) {
              double y = 0.0, p = 1.0;
              for (std::size_t i = 0; i < c.size(); ++i) y += c[i] * x[i], p *= x[i];
              return y + prod * p;
            };
            const std::vector<std::pair<double, double>> boxes(c.size(), {0.0, 1.0});
            const auto s = sobol_indices(f, boxes, *cfg);
            csv::Table t{{"input", "s1", "st", "ci1", "cit", "needs_more_samples"}, {}};
            for (std::size_t i = 0; i < s.size(); ++i)
              t.rows.push_back({"x" + std::to_string(i + 1), fmt(s[i].s1), fmt(s[i].st), fmt(s[i].ci1),
                                fmt(s[i].cit), s[i].needs_more_samples ? "1" : "0"});
            write_text(*out, csv::format(t));
            return Outcome{{*out}, manifest_for_file(*out, *manifest), json::object()};
          }};
}

Command vuln_overlap(CLI::App& parent) {
  auto* app = parent.add_subcommand("overlap", "box-plot overlap of clean and poisoned scores per detector");
  auto scores = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--scores", *scores)->required();
  app->add_option("--out", *out)->required();
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "overlap"}, {"scores"}, {}, [=] {
            const DetectorOutputs d = read_outputs(*scores);
            csv::Table t{{"detector", "clean_q1", "clean_q3", "poisoned_q1", "poisoned_q3", "overlap"}, {}};
            for (std::size_t j = 0; j < d.detectors(); ++j) {
              std::vector<double> v[2];
              for (std::size_t i = 0; i < d.models(); ++i)
                if (d.values[i][j]) v[d.truth[i]].push_back(*d.values[i][j]);
              require(!v[0].empty() && !v[1].empty(), ErrorKind::data,
                      "detector " + d.detector_ids[j] + " lacks outputs for one class");
              const Box a = iqr_box(v[0]), b = iqr_box(v[1]);
              t.rows.push_back({d.detector_ids[j], fmt(a.q1), fmt(a.q3), fmt(b.q1), fmt(b.q3), fmt(overlap_index(a, b))});
            }
            write_text(*out, csv::format(t));
            return Outcome{{*out}, manifest_for_file(*out, *manifest), json::object()};
          }};
}

Command vuln_flip(CLI::App& parent) {
  auto* app = parent.add_subcommand("flip", "flipping and outlier tags of one detector's outputs");
  auto scores = std::make_shared<std::string>();
  auto detector = std::make_shared<std::string>();
  auto k = std::make_shared<double>(1.5);
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--scores", *scores)->required();
  app->add_option("--detector", *detector, "column (default: the first)");
  app->add_option("--k", *k, "IQR multiplier")->capture_default_str();
  app->add_option("--out", *out)->required();
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "flip"}, {"scores"}, {}, [=] {
            const DetectorOutputs d = read_outputs(*scores);
            const std::size_t j = detector_index(d, *detector);
            csv::Table t{{"model_id", "ground_truth", "inference", "flipping", "outlier"}, {}};
            std::vector<std::vector<std::string>> rows(d.models());
            // Outlier fences come from each ground-truth group separately.
            for (int truth : {0, 1}) {
              std::vector<std::size_t> members;
              std::vector<double> v;
              for (std::size_t i = 0; i < d.models(); ++i)
                if (d.truth[i] == truth && d.values[i][j]) members.push_back(i), v.push_back(*d.values[i][j]);
              if (v.empty()) continue;
              const auto tags = flipping_outlier_classify(v, truth, *k);
              for (std::size_t a = 0; a < members.size(); ++a)
                rows[members[a]] = {d.model_ids[members[a]], std::to_string(truth), fmt(v[a]),
                                    tags[a].flipping ? "1" : "0", tags[a].outlier ? "1" : "0"};
            }
            for (auto& r : rows)
              if (!r.empty()) t.rows.push_back(std::move(r));
            write_text(*out, csv::format(t));
            return Outcome{{*out}, manifest_for_file(*out, *manifest), json::object()};
          }};
}

Command vuln_nv(CLI::App& parent) {
  auto* app = parent.add_subcommand("nv", "clean models most detectors get wrong");
  auto scores = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--scores", *scores)->required();
  app->add_option("--out", *out)->required();
  app->add_option("--manifest", *manifest);
  return {app, {"vuln", "nv"}, {"scores"}, {}, [=] {
            const auto ids = nv_candidates(read_outputs(*scores));
            csv::Table t{{"model_id"}, {}};
            for (const auto& id : ids) t.rows.push_back({id});
            write_text(*out, csv::format(t));
            return Outcome{{*out}, manifest_for_file(*out, *manifest), {{"candidates", ids.size()}}};
          }};
}

Command qtest(CLI::App& root) {
  auto* app = root.add_subcommand("qtest", "Dixon's Q-test on final-layer row sums or a list of values");
  auto model = std::make_shared<std::string>();
  auto layer = std::make_shared<std::string>();
  auto values = std::make_shared<std::vector<double>>();
  auto confidence = std::make_shared<double>(0.95);
  auto out = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  app->add_option("--model", *model, "model container");
  app->add_option("--layer", *layer, "final-layer weight tensor name");
  app->add_option("--values", *values, "values to test instead of row sums")->delimiter(',');
  app->add_option("--confidence", *confidence, "0.90, 0.95 or 0.99")->capture_default_str();
  app->add_option("--out", *out, "row CSV")->required();
  app->add_option("--manifest", *manifest);
  return {app, {"qtest"}, {"model"}, {}, [=] {
            DixonResult r;
            if (!values->empty()) {
              require(model->empty(), ErrorKind::usage, "give either --values or --model");
              r = dixon_q(*values, *confidence);
              r.row_sums = *values;
            } else {
              require(!model->empty() && !layer->empty(), ErrorKind::usage, "--model needs --layer");
              r = dixon_q_final_layer(load_container(*model), *layer, *confidence);
            }
            csv::Table t{{"row", "value", "suspect"}, {}};
            for (std::size_t i = 0; i < r.row_sums.size(); ++i)
              t.rows.push_back({std::to_string(i), fmt(r.row_sums[i]), i == r.suspect_row ? "1" : "0"});
            write_text(*out, csv::format(t));
            std::cout << "q=" << fmt(r.q) << "\ncritical=" << fmt(r.critical) << "\nflagged=" << r.flagged << "\n";
            return Outcome{{*out},
                           manifest_for_file(*out, *manifest),
                           {{"q", r.q}, {"critical", r.critical}, {"flagged", r.flagged},
                            {"suspect_row", r.suspect_row}, {"suspect_is_max", r.suspect_is_max}}};
          }};
}

Command serve_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("serve", "run the playground HTTP service");
  auto host = std::make_shared<std::string>("127.0.0.1");
  auto port = std::make_shared<int>(8080);
  auto seed = std::make_shared<std::uint64_t>(0);
  auto idle = std::make_shared<long>(3600);
  app->add_option("--host", *host)->capture_default_str();
  app->add_option("--port", *port)->capture_default_str();
  app->add_option("--seed", *seed, "session id seed")->required();
  app->add_option("--idle-timeout", *idle, "seconds before an idle session is dropped")->capture_default_str();
  return {app, {"serve"}, {}, {"seed"}, [=] {
            service::ServiceConfig cfg;
            cfg.seed = *seed;
            cfg.idle_timeout = std::chrono::seconds(*idle);
            std::cout << "listening on http://" << *host << ":" << *port << std::endl;
            service::serve(*host, *port, cfg);
            return Outcome{};
          }};
}

// ---- driver ----

struct Cli {
  CLI::App app{"Weight-space trojan detection toolkit and playground calculator", "nnf"};
  std::vector<Command> commands;
  std::string replay_manifest;
  std::string config;  // consumed by expand_config before parsing
  bool dry_run = false;

  Cli() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    app.add_option("--config", config, "key=value file of option defaults for the command");
    app.add_flag("--dry-run", dry_run, "print the resolved run manifest and exit");
    commands.push_back(round_gen(app));
    commands.push_back(extract_features(app));
    commands.push_back(train_detector(app));
    commands.push_back(score(app));
    commands.push_back(metrics(app));
    auto* ens = app.add_subcommand("ensemble", "detector stacking")->require_subcommand(1);
    commands.push_back(ensemble_lasso(*ens));
    commands.push_back(ensemble_forest(*ens));
    commands.push_back(ensemble_cluster(*ens));
    commands.push_back(inefficiency(app));
    commands.push_back(quadrant_cmd(app));
    auto* vuln = app.add_subcommand("vuln", "natural vulnerability and sensitivity statistics")->require_subcommand(1);
    commands.push_back(vuln_mc(*vuln));
    commands.push_back(vuln_ace(*vuln));
    commands.push_back(vuln_sobol(*vuln));
    commands.push_back(vuln_overlap(*vuln));
    commands.push_back(vuln_flip(*vuln));
    commands.push_back(vuln_nv(*vuln));
    commands.push_back(qtest(app));
    commands.push_back(serve_cmd(app));
    auto* replay = app.add_subcommand("replay", "re-run a manifest and check its artifact hashes");
    replay->add_option("manifest", replay_manifest, "run manifest")->required();
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Config file lines "key = value" (blank lines and '#' comments allowed).
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::data, "cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::usage, path + ":" + std::to_string(no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    require(!key.empty(), ErrorKind::usage, path + ":" + std::to_string(no) + ": empty key");
    kv.emplace_back(key, value);
  }
  return kv;
}

CLI::App* find_sub(CLI::App* app, const std::string& name) {
  for (CLI::App* s : app->get_subcommands([](CLI::App*) { return true; }))
    if (s->get_name() == name) return s;
  return nullptr;
}

std::string option_value(const CLI::Option* opt) {
  if (opt->get_expected_min() == 0) return opt->as<bool>() ? "true" : "false";
  return "";
}

int run(std::vector<std::string> args);

// Expands --config into flags. Keys also given on the command line are
// dropped, so flags win.
std::vector<std::string> expand_config(Cli& cli, std::vector<std::string> args) {
  std::string config;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), ErrorKind::usage, "--config needs a file");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return rest;
  std::size_t depth = 0;
  while (depth < rest.size() && rest[depth].rfind("-", 0) == 0) ++depth;  // root flags
  CLI::App* cur = &cli.app;
  while (depth < rest.size()) {
    CLI::App* next = find_sub(cur, rest[depth]);
    if (!next) break;
    cur = next;
    ++depth;
  }
  require(cur != &cli.app, ErrorKind::usage, "--config needs a command");
  std::set<std::string> given;
  for (std::size_t i = depth; i < rest.size(); ++i)
    if (rest[i].rfind("--", 0) == 0) given.insert(rest[i].substr(2, rest[i].find('=') - 2));
  std::vector<std::string> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(depth));
  for (const auto& [k, v] : read_config(config)) {
    const CLI::Option* opt = cur->get_option_no_throw("--" + k);
    require(opt != nullptr, ErrorKind::usage, "unknown config key '" + k + "' for " + cur->get_name());
    if (!given.count(k)) out.push_back("--" + k + "=" + v);
  }
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(depth), rest.end());
  return out;
}

// Command path, given options and seeds; no file access.
cli::Manifest record_args(const Command& c) {
  cli::Manifest m;
  m.command = c.path;
  for (const CLI::Option* opt : c.app->get_options()) {
    if (opt->count() == 0 || opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    const std::string flag = option_value(opt);
    m.args[name] = flag.empty() ? opt->results() : std::vector<std::string>{flag};
  }
  for (const auto& s : c.seeds)
    if (auto it = m.args.find(s); it != m.args.end()) m.seeds[s] = it->second.back();
  return m;
}

int replay(const std::string& path) {
  const cli::Manifest before = cli::Manifest::from_json(json::parse(csv::read_file(path)));
  for (const auto& [p, digest] : before.inputs)
    require(cli::sha256_path(p) == digest, ErrorKind::data, "input changed since the run: " + p);
  std::vector<std::string> args = before.argv();
  args.push_back("--manifest=" + path);
  const int code = run(args);
  if (code != kExitOk) return code;
  const cli::Manifest after = cli::Manifest::from_json(json::parse(csv::read_file(path)));
  std::size_t mismatched = 0;
  for (const auto& [p, digest] : before.artifacts) {
    const auto it = after.artifacts.find(p);
    if (it == after.artifacts.end() || it->second != digest) {
      std::cerr << "artifact differs: " << p << "\n";
      ++mismatched;
    }
  }
  require(mismatched == 0, ErrorKind::data, std::to_string(mismatched) + " artifact(s) not reproduced");
  std::cout << "reproduced " << before.artifacts.size() << " artifact(s)\n";
  return kExitOk;
}

int run(std::vector<std::string> args) {
  Cli cli;
  try {
    args = expand_config(cli, std::move(args));
    std::reverse(args.begin(), args.end());
    cli.app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  try {
    if (find_sub(&cli.app, "replay")->parsed()) return replay(cli.replay_manifest);
    for (const Command& c : cli.commands) {
      if (!c.app->parsed()) continue;
      if (cli.dry_run) {
        std::cout << record_args(c).to_json().dump(2) << "\n";
        return kExitOk;
      }
      cli::Manifest m = record_args(c);
      for (const auto& in : c.inputs)
        if (auto it = m.args.find(in); it != m.args.end())
          for (const auto& p : it->second) m.inputs[p] = cli::sha256_path(p);
      const Outcome o = c.run();
      if (o.manifest.empty()) return kExitOk;
      // The manifest path itself is bookkeeping, not part of the run.
      m.args.erase("manifest");
      for (const auto& a : o.artifacts) m.artifacts[a] = cli::sha256_path(a);
      m.summary = o.summary;
      write_text(o.manifest, m.to_json().dump(2) + "\n");
      return kExitOk;
    }
    fail(ErrorKind::usage, "no command given");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args));
}
