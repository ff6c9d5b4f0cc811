#include "nnf/service.hpp"

#include <atomic>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/playground/dataset.hpp"
#include "nnf/playground/experiments.hpp"
#include "nnf/playground/memory.hpp"
#include "nnf/playground/mlp.hpp"
#include "nnf/playground/states.hpp"
#include "nnf/random.hpp"

namespace nnf::service {

using json = nlohmann::json;
using namespace nnf::playground;

enum class JobState { idle, running, done, failed };

const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::idle: return "idle";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "?";
}

struct Session {
  std::mutex mu;
  std::string id;
  DatasetKind kind = DatasetKind::circle;
  std::size_t points = 400;
  double noise = 0.0;
  std::uint64_t data_seed = 0;
  std::optional<TrojanSpec> trojan;
  Dataset2D clean;    // before the trojan
  Dataset2D current;  // what training sees
  MlpSpec spec;
  std::optional<Mlp> model;
  Memory memory;
  json log = json::array();
  Clock::time_point last_access;

  JobState job = JobState::idle;
  std::size_t step = 0, steps = 0;
  std::vector<double> losses;
  std::string job_error;
  double train_accuracy = 0.0, test_accuracy = 0.0;
  std::thread worker;
  std::atomic<bool> cancel{false};

  ~Session() {
    cancel = true;
    if (worker.joinable()) worker.join();
  }
};

namespace {

const char* error_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::invalid: return "invalid";
  }
  return "invalid";
}

int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    default: return 422;
  }
}

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, json{{"code", code}, {"message", message}}.dump()};
}

Response ok(int status, const json& j) { return {status, j.dump()}; }

// Rejects keys outside `allowed`.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  require(j.is_object(), ErrorKind::invalid, what + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) require(ok.count(k) > 0, ErrorKind::invalid, "unknown " + what + " key: " + k);
}

std::uint64_t get_count(const json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_number_unsigned(), ErrorKind::invalid, std::string(key) + " must be a non-negative integer");
  return j[key].get<std::uint64_t>();
}

double get_real(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_number(), ErrorKind::invalid, std::string(key) + " must be a number");
  return j[key].get<double>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_string(), ErrorKind::invalid, std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::invalid, std::string("malformed JSON body: ") + e.what());
  }
}

MlpSpec spec_from_json(const json& j) {
  check_keys(j,
             {"features", "hidden", "activation", "learning_rate", "regularization", "regularization_rate",
              "train_ratio", "batch_size", "seed"},
             "spec");
  MlpSpec s;
  if (j.contains("features")) {
    require(j["features"].is_array(), ErrorKind::invalid, "features must be an array of names");
    s.features.clear();
    for (const auto& f : j["features"]) s.features.push_back(parse_feature(f.get<std::string>()));
  }
  if (j.contains("hidden")) {
    require(j["hidden"].is_array(), ErrorKind::invalid, "hidden must be an array of layer sizes");
    s.hidden.clear();
    for (const auto& h : j["hidden"]) {
      require(h.is_number_unsigned(), ErrorKind::invalid, "hidden layer sizes must be positive integers");
      s.hidden.push_back(h.get<std::size_t>());
    }
  }
  s.activation = parse_activation(get_string(j, "activation", activation_name(s.activation)));
  s.learning_rate = get_real(j, "learning_rate", s.learning_rate);
  s.regularization = parse_regularization(get_string(j, "regularization", regularization_name(s.regularization)));
  s.regularization_rate = get_real(j, "regularization_rate", s.regularization_rate);
  s.train_ratio = get_real(j, "train_ratio", s.train_ratio);
  s.batch_size = get_count(j, "batch_size", s.batch_size);
  s.seed = get_count(j, "seed", s.seed);
  s.validate();
  return s;
}

json spec_to_json(const MlpSpec& s) {
  json f = json::array();
  for (Feature x : s.features) f.push_back(feature_name(x));
  return {{"features", f},
          {"hidden", s.hidden},
          {"activation", activation_name(s.activation)},
          {"learning_rate", s.learning_rate},
          {"regularization", regularization_name(s.regularization)},
          {"regularization_rate", s.regularization_rate},
          {"train_ratio", s.train_ratio},
          {"batch_size", s.batch_size},
          {"seed", s.seed}};
}

json mlp_to_json(const Mlp& m) {
  json f = json::array();
  for (Feature x : m.features) f.push_back(feature_name(x));
  json layers = json::array();
  for (const auto& L : m.layers)
    layers.push_back({{"in", L.in}, {"out", L.out}, {"weights", L.weights}, {"bias", L.bias}});
  return {{"features", f}, {"activation", activation_name(m.activation)}, {"layers", layers}};
}

const char* class_name(int c) { return c == kP ? "P" : "N"; }

int parse_class(const json& j) {
  const std::string s = j.get<std::string>();
  require(s == "P" || s == "N", ErrorKind::invalid, "class must be P or N");
  return s == "P" ? kP : kN;
}

Point2 parse_point(const json& j) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), ErrorKind::invalid,
          "a point is [x1, x2]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json region_to_json(const Region& r) {
  json j{{"source", class_name(r.source)}, {"target", class_name(r.target)}};
  if (r.shape == Region::Shape::disc) {
    j["shape"] = "disc";
    j["center"] = {r.center.x1, r.center.x2};
    j["radius"] = r.radius;
  } else {
    j["shape"] = "polygon";
    json v = json::array();
    for (const auto& p : r.vertices) v.push_back({p.x1, p.x2});
    j["vertices"] = v;
  }
  return j;
}

Region region_from_json(const json& j) {
  check_keys(j, {"shape", "center", "radius", "vertices", "source", "target"}, "region");
  Region r;
  const std::string shape = get_string(j, "shape", "disc");
  require(j.contains("source") && j.contains("target"), ErrorKind::invalid, "a region needs source and target");
  r.source = parse_class(j["source"]);
  r.target = parse_class(j["target"]);
  if (shape == "disc") {
    require(j.contains("center") && j.contains("radius"), ErrorKind::invalid, "a disc needs center and radius");
    r.shape = Region::Shape::disc;
    r.center = parse_point(j["center"]);
    r.radius = get_real(j, "radius", 0.0);
    require(r.radius > 0.0, ErrorKind::invalid, "disc radius must be positive");
  } else if (shape == "polygon") {
    require(j.contains("vertices") && j["vertices"].is_array() && j["vertices"].size() >= 3, ErrorKind::invalid,
            "a polygon needs at least 3 vertices");
    r.shape = Region::Shape::polygon;
    for (const auto& v : j["vertices"]) r.vertices.push_back(parse_point(v));
  } else {
    fail(ErrorKind::invalid, "region shape must be disc or polygon");
  }
  return r;
}

json trojan_to_json(const std::optional<TrojanSpec>& t) {
  if (!t) return nullptr;
  json regions = json::array();
  for (const auto& r : t->regions) regions.push_back(region_to_json(r));
  return {{"id", t->id}, {"dataset", dataset_kind_name(t->dataset)}, {"regions", regions}};
}

json job_json(const Session& s, std::size_t since) {
  json j{{"state", job_state_name(s.job)}, {"step", s.step}, {"steps", s.steps}};
  j["loss"] = s.losses.empty() ? json(nullptr) : json(s.losses.back());
  const std::size_t from = std::min(since, s.losses.size());
  j["losses"] = std::vector<double>(s.losses.begin() + static_cast<std::ptrdiff_t>(from), s.losses.end());
  j["since"] = from;
  if (s.job == JobState::failed) j["error"] = s.job_error;
  if (s.job == JobState::done) {
    j["train_accuracy"] = s.train_accuracy;
    j["test_accuracy"] = s.test_accuracy;
  }
  return j;
}

json summary_json(const Session& s) {
  return {{"id", s.id},
          {"dataset",
           {{"kind", dataset_kind_name(s.kind)}, {"points", s.points}, {"noise", s.noise}, {"seed", s.data_seed}}},
          {"trojan", trojan_to_json(s.trojan)},
          {"spec", spec_to_json(s.spec)},
          {"has_model", s.model.has_value()},
          {"job", job_json(s, s.losses.size())},
          {"memory", s.memory.names()}};
}

json slot_json(const Memory& mem, const std::string& name) {
  const MemorySlot* slot = mem.find(name);
  if (!slot || slot->empty()) return {{"slot", name}, {"empty", true}, {"holds", nullptr}, {"net_count", 0}};
  return {{"slot", name},
          {"empty", false},
          {"holds", slot->holds_model() ? "model" : "dataset"},
          {"net_count", slot->net_count()}};
}

void rebuild_dataset(Session& s, DatasetKind kind, std::size_t points, double noise, std::uint64_t seed,
                     const std::optional<TrojanSpec>& trojan) {
  if (trojan)
    require(trojan->dataset == kind, ErrorKind::conflict,
            "trojan " + trojan->id + " belongs to the " + dataset_kind_name(trojan->dataset) +
                " dataset; clear it first");
  Dataset2D clean = generate_dataset(kind, points, noise, seed);
  Dataset2D current = trojan ? embed_trojan(clean, *trojan) : clean;
  s.kind = kind;
  s.points = points;
  s.noise = noise;
  s.data_seed = seed;
  s.trojan = trojan;
  s.clean = std::move(clean);
  s.current = std::move(current);
}

bool query_flag(const std::map<std::string, std::string>& q, const std::string& key, bool fallback) {
  auto it = q.find(key);
  if (it == q.end()) return fallback;
  require(it->second == "true" || it->second == "false" || it->second == "1" || it->second == "0",
          ErrorKind::invalid, key + " must be true or false");
  return it->second == "true" || it->second == "1";
}

std::string query_or(const std::map<std::string, std::string>& q, const std::string& key, const std::string& fallback) {
  auto it = q.find(key);
  return it == q.end() ? fallback : it->second;
}

const Mlp& slot_model(const Session& s, const std::string& name) {
  const MemorySlot* slot = s.memory.find(name);
  require(slot && !slot->empty(), ErrorKind::not_found, "memory slot " + name + " is empty");
  require(slot->holds_model(), ErrorKind::conflict, "memory slot " + name + " holds a dataset");
  static thread_local Mlp held;
  held = std::get<Mlp>(slot->retrieve());
  return held;
}

json measurements(const Session& s, const std::map<std::string, std::string>& q) {
  const std::string kind = query_or(q, "kind", "");
  require(!kind.empty(), ErrorKind::invalid, "kind is required");
  require(s.model.has_value(), ErrorKind::conflict, "the session has no network yet");
  const Mlp& m = *s.model;
  StateOptions opt;
  opt.by_predicted = query_flag(q, "by_predicted", false);
  opt.include_output = query_flag(q, "include_output", true);
  const std::string which = query_or(q, "dataset", "current");
  require(which == "current" || which == "clean", ErrorKind::invalid, "dataset must be current or clean");
  const Dataset2D& ds = which == "clean" ? s.clean : s.current;

  json out{{"kind", kind}};
  if (kind == "states") {
    const StateHistogram h = capture_states(m, ds, opt);
    json layers = json::array();
    for (std::size_t l = 0; l < h.layers(); ++l) {
      json classes = json::object();
      for (int c : {kN, kP}) {
        json counts = json::object();
        for (const auto& [state, n] : h.counts[l][static_cast<std::size_t>(c)]) counts[state] = n;
        classes[class_name(c)] = counts;
      }
      layers.push_back({{"layer", l}, {"nodes", h.nodes[l]}, {"classes", classes}});
    }
    out["layers"] = layers;
  } else if (kind == "kl" || kind == "utilization") {
    json rows = json::array();
    for (const auto& r : inefficiency_table(capture_states(m, ds, opt))) {
      json row{{"layer", r.layer}, {"nodes", r.nodes}, {"class", class_name(r.cls)}, {"points", r.points}};
      if (kind == "kl") {
        row["distinct_states"] = r.distinct_states;
        row["modified_kl"] = r.modified_kl;
        row["insufficient"] = r.insufficient;
      }
      row["eta_state"] = r.util.eta_state;
      row["eta_h"] = r.util.eta_h;
      row["eta_kl"] = r.util.eta_kl;
      rows.push_back(row);
    }
    out["rows"] = rows;
  } else if (kind == "delta-vs-slot" || kind == "quadrant") {
    const std::string slot = query_or(q, "slot", "");
    require(!slot.empty(), ErrorKind::invalid, "slot is required");
    // The slot holds the reference (trojan-free) network; the session's
    // network is the one under test. Both are measured on the clean data.
    const auto deltas = kl_delta(slot_model(s, slot), m, s.clean, opt);
    const LayerDelta mean = mean_hidden_delta(deltas, m.hidden_layers());
    if (kind == "delta-vs-slot") {
      json rows = json::array();
      for (std::size_t l = 0; l < deltas.size(); ++l)
        rows.push_back({{"layer", l}, {"delta_p", deltas[l].delta_p}, {"delta_n", deltas[l].delta_n}});
      out["rows"] = rows;
    }
    out["mean"] = {{"delta_p", mean.delta_p}, {"delta_n", mean.delta_n}};
    if (kind == "quadrant") {
      const double sigma = csv::parse_double(query_or(q, "sigma", "0.5"));
      out["sigma"] = sigma;
      out["verdict"] = verdict_name(quadrant(mean.delta_p, mean.delta_n, sigma));
    }
  } else if (kind == "grid") {
    const double res = csv::parse_double(query_or(q, "resolution", "50"));
    require(res >= 2 && res <= 400 && res == std::floor(res), ErrorKind::invalid,
            "resolution must be an integer in [2, 400]");
    const auto n = static_cast<std::size_t>(res);
    json rows = json::array();
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> row(n);
      const double x2 = -kDomain + 2.0 * kDomain * static_cast<double>(r) / static_cast<double>(n - 1);
      for (std::size_t c = 0; c < n; ++c) {
        const double x1 = -kDomain + 2.0 * kDomain * static_cast<double>(c) / static_cast<double>(n - 1);
        row[c] = predict_proba(m, {x1, x2});
      }
      rows.push_back(row);
    }
    out["resolution"] = n;
    out["domain"] = {-kDomain, kDomain};
    out["probabilities"] = rows;  // rows[r][c]: x2 ascends with r, x1 with c
  } else {
    fail(ErrorKind::invalid, "unknown measurement kind: " + kind);
  }
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::istringstream in(path);
  for (std::string p; std::getline(in, p, '/');)
    if (!p.empty()) parts.push_back(p);
  return parts;
}

}  // namespace

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.now) cfg_.now = [] { return Clock::now(); };
}

Service::~Service() {
  std::map<std::string, std::shared_ptr<Session>> doomed;
  {
    std::lock_guard lock(mu_);
    doomed.swap(sessions_);
  }
}

std::size_t Service::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void Service::expire_idle() {
  std::vector<std::shared_ptr<Session>> doomed;
  {
    std::lock_guard lock(mu_);
    const auto now = cfg_.now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      bool idle;
      {
        std::lock_guard slock(it->second->mu);
        idle = now - it->second->last_access > cfg_.idle_timeout;
      }
      if (idle) {
        it->second->cancel = true;
        doomed.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  // Destructors join cancelled jobs outside the service lock.
}

std::shared_ptr<Session> Service::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  require(it != sessions_.end(), ErrorKind::not_found, "unknown session " + id);
  return it->second;
}

Response Service::handle(const std::string& method, const std::string& path,
                         const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    expire_idle();
    const auto parts = split_path(path);
    require(!parts.empty() && parts[0] == "sessions", ErrorKind::not_found, "no route for " + path);

    if (parts.size() == 1) {
      require(method == "POST", ErrorKind::not_found, "no route for " + method + " " + path);
      auto s = std::make_shared<Session>();
      {
        std::lock_guard lock(mu_);
        do {
          char buf[24];
          std::snprintf(buf, sizeof buf, "%016llx",
                        static_cast<unsigned long long>(derive_seed(cfg_.seed, created_++)));
          s->id = buf;
        } while (sessions_.count(s->id));
        rebuild_dataset(*s, s->kind, s->points, s->noise, s->data_seed, std::nullopt);
        s->last_access = cfg_.now();
        sessions_[s->id] = s;
      }
      return ok(201, {{"id", s->id}});
    }

    const std::string& id = parts[1];
    std::shared_ptr<Session> sp = find(id);
    Session& s = *sp;
    std::unique_lock lock(s.mu);
    s.last_access = cfg_.now();
    const std::string tail = parts.size() > 2 ? parts[2] : "";
    const std::string suffix = path.substr(path.find(id) + id.size());
    auto record = [&](const json& b) { s.log.push_back({{"method", method}, {"path", suffix}, {"body", b}}); };
    auto not_running = [&] {
      require(s.job != JobState::running, ErrorKind::conflict, "a training job is running");
    };
    auto route_is = [&](const char* m, std::size_t n, const char* t) {
      return method == m && parts.size() == n && tail == t;
    };

    if (method == "GET" && parts.size() == 2) return ok(200, summary_json(s));
    if (method == "DELETE" && parts.size() == 2) {
      lock.unlock();
      std::lock_guard g(mu_);
      sessions_.erase(id);
      s.cancel = true;
      return ok(200, {{"id", id}, {"deleted", true}});
    }
    if (route_is("PUT", 3, "dataset")) {
      not_running();
      const json b = parse_body(body);
      check_keys(b, {"kind", "points", "noise", "seed"}, "dataset");
      const DatasetKind kind = parse_dataset_kind(get_string(b, "kind", dataset_kind_name(s.kind)));
      const std::size_t points = get_count(b, "points", s.points);
      const double noise = get_real(b, "noise", s.noise);
      const std::uint64_t seed = get_count(b, "seed", s.data_seed);
      rebuild_dataset(s, kind, points, noise, seed, s.trojan);
      record(b);
      return ok(200, summary_json(s)["dataset"]);
    }
    if (route_is("GET", 3, "dataset")) {
      json pts = json::array(), labels = json::array();
      for (std::size_t i = 0; i < s.current.size(); ++i) {
        pts.push_back({s.current.points[i].x1, s.current.points[i].x2});
        labels.push_back(class_name(s.current.labels[i]));
      }
      return ok(200, {{"kind", dataset_kind_name(s.current.kind)},
                      {"noise", s.current.noise},
                      {"seed", s.current.seed},
                      {"points", pts},
                      {"labels", labels},
                      {"trojaned", s.current.trojaned},
                      {"trojan", trojan_to_json(s.trojan)}});
    }
    if (route_is("PUT", 3, "trojan")) {
      not_running();
      const json b = parse_body(body);
      std::optional<TrojanSpec> t;
      if (b.contains("fixture")) {
        check_keys(b, {"fixture"}, "trojan");
        if (!b["fixture"].is_null()) t = trojan_fixture(b["fixture"].get<std::string>());
      } else {
        check_keys(b, {"id", "regions"}, "trojan");
        require(b.contains("regions") && b["regions"].is_array(), ErrorKind::invalid, "regions must be an array");
        TrojanSpec spec;
        spec.id = get_string(b, "id", "custom");
        spec.dataset = s.kind;
        for (const auto& r : b["regions"]) spec.regions.push_back(region_from_json(r));
        t = spec;
      }
      if (t) t->validate();
      rebuild_dataset(s, s.kind, s.points, s.noise, s.data_seed, t);
      record(b);
      return ok(200, {{"trojan", trojan_to_json(s.trojan)},
                      {"relabeled", std::count(s.current.trojaned.begin(), s.current.trojaned.end(), 1)}});
    }
    if (route_is("POST", 3, "train")) {
      not_running();
      const json b = parse_body(body);
      check_keys(b, {"steps", "spec", "init", "init_seed"}, "train");
      require(b.contains("steps"), ErrorKind::invalid, "steps is required");
      const std::size_t steps = get_count(b, "steps", 0);
      require(steps <= 1000000, ErrorKind::invalid, "at most 1000000 steps per job");
      const MlpSpec spec = b.contains("spec") ? spec_from_json(b["spec"]) : s.spec;
      const std::string init = get_string(b, "init", "fresh");
      Mlp start;
      if (init == "fresh") {
        start = init_mlp(spec, get_count(b, "init_seed", 0));
      } else {
        require(init == "continue", ErrorKind::invalid, "init must be fresh or continue");
        require(s.model.has_value(), ErrorKind::conflict, "no network to continue from");
        require(s.model->features == spec.features && s.model->activation == spec.activation &&
                    init_mlp(spec, 0).same_architecture(*s.model),
                ErrorKind::conflict, "the network does not match the requested architecture");
        start = *s.model;
      }
      if (s.worker.joinable()) s.worker.join();
      s.spec = spec;
      s.job = JobState::running;
      s.step = 0;
      s.steps = steps;
      s.losses.clear();
      s.job_error.clear();
      record(b);
      Session* raw = &s;
      const Dataset2D data = s.current;
      s.worker = std::thread([raw, start, data, spec, steps] {
        try {
          TrainResult r = train(start, data, spec, steps, [raw](std::size_t step, double loss) {
            std::lock_guard g(raw->mu);
            raw->step = step + 1;
            raw->losses.push_back(loss);
            return !raw->cancel.load();
          });
          const auto split = training_split(data, spec);
          std::vector<bool> in_split(data.size(), false);
          for (auto i : split) in_split[i] = true;
          std::vector<std::size_t> rest;
          for (std::size_t i = 0; i < data.size(); ++i)
            if (!in_split[i]) rest.push_back(i);
          const double train_acc = accuracy(r.model, data, split), test_acc = accuracy(r.model, data, rest);
          std::lock_guard g(raw->mu);
          raw->model = std::move(r.model);
          raw->train_accuracy = train_acc;
          raw->test_accuracy = test_acc;
          raw->job = JobState::done;
        } catch (const std::exception& e) {
          std::lock_guard g(raw->mu);
          raw->job = JobState::failed;
          raw->job_error = e.what();
        }
      });
      return ok(202, job_json(s, 0));
    }
    if (route_is("GET", 3, "status")) {
      const std::size_t since = static_cast<std::size_t>(csv::parse_double(query_or(query, "since", "0")));
      return ok(200, job_json(s, since));
    }
    if (route_is("GET", 3, "model")) {
      require(s.model.has_value(), ErrorKind::conflict, "the session has no network yet");
      return ok(200, mlp_to_json(*s.model));
    }
    if (route_is("GET", 3, "measurements")) return ok(200, measurements(s, query));
    if (route_is("GET", 3, "log")) return ok(200, s.log);
    if (route_is("GET", 3, "memory")) {
      json slots = json::array();
      for (const auto& name : s.memory.names()) slots.push_back(slot_json(s.memory, name));
      return ok(200, {{"slots", slots}});
    }
    if (method == "POST" && parts.size() == 5 && tail == "memory") {
      const std::string& slot = parts[3];
      const MemoryOp op = parse_memory_op(parts[4]);
      const json b = parse_body(body);
      check_keys(b, {"target", "mean"}, "memory");
      const std::string target = get_string(b, "target", "model");
      require(target == "model" || target == "dataset", ErrorKind::invalid, "target must be model or dataset");
      json out;
      if (op == MemoryOp::retrieve) {
        const MemorySlot* found = s.memory.find(slot);
        require(found && !found->empty(), ErrorKind::not_found, "memory slot " + slot + " is empty");
        const bool mean = b.contains("mean") && b["mean"].get<bool>();
        if (found->holds_model()) {
          not_running();
          s.model = mean ? found->retrieve_mean() : std::get<Mlp>(found->retrieve());
          out["model"] = mlp_to_json(*s.model);
        } else {
          not_running();
          require(!mean, ErrorKind::conflict, "only networks can be averaged");
          s.current = std::get<Dataset2D>(found->retrieve());
          s.clean = s.current;
          s.trojan.reset();
          s.kind = s.current.kind;
          s.points = s.current.size();
          s.noise = s.current.noise;
          s.data_seed = s.current.seed;
        }
      } else if (op == MemoryOp::clear) {
        s.memory.apply(slot, op, std::nullopt);
      } else {
        std::optional<Payload> payload;
        if (target == "model") {
          require(s.model.has_value(), ErrorKind::conflict, "the session has no network yet");
          payload = *s.model;
        } else {
          payload = s.current;
        }
        s.memory.apply(slot, op, std::move(payload));
      }
      record(b);
      out["slot"] = slot_json(s.memory, slot);
      out["op"] = memory_op_name(op);
      return ok(200, out);
    }
    fail(ErrorKind::not_found, "no route for " + method + " " + path);
  } catch (const Error& e) {
    return error_response(http_status(e.kind()), error_code(e.kind()), e.what());
  } catch (const json::exception& e) {
    return error_response(422, "invalid", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

void Service::bind(httplib::Server& srv) {
  auto h = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> q;
    for (const auto& [k, v] : req.params) q[k] = v;
    const Response r = handle(req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  srv.Get(".*", h);
  srv.Post(".*", h);
  srv.Put(".*", h);
  srv.Delete(".*", h);
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

void serve(const std::string& host, int port, ServiceConfig cfg) {
  Service svc(std::move(cfg));
  httplib::Server srv;
  svc.bind(srv);
  require(srv.listen(host, port), ErrorKind::usage, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace nnf::service
