#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "nnf/csv.hpp"
#include "nnf/service.hpp"

using json = nlohmann::json;
using namespace nnf;
using namespace nnf::service;

namespace {

struct Client {
  Service& svc;

  json call(const std::string& method, const std::string& path, const json& body = nullptr, int expect = 200,
            const std::map<std::string, std::string>& query = {}) {
    const Response r = svc.handle(method, path, query, body.is_null() ? "" : body.dump());
    INFO(method << " " << path << " -> " << r.status << " " << r.body);
    CHECK(r.status == expect);
    return json::parse(r.body);
  }
  int status(const std::string& method, const std::string& path, const std::string& body = "",
             const std::map<std::string, std::string>& query = {}) {
    return svc.handle(method, path, query, body).status;
  }
  std::string create() { return call("POST", "/sessions", nullptr, 201)["id"]; }
  json wait_done(const std::string& id) {
    for (int i = 0; i < 6000; ++i) {
      json s = call("GET", "/sessions/" + id + "/status");
      if (s["state"] != "running") return s;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    FAIL("training did not finish");
    return nullptr;
  }
  json measure(const std::string& id, const std::string& kind, std::map<std::string, std::string> q = {}) {
    q["kind"] = kind;
    return call("GET", "/sessions/" + id + "/measurements", nullptr, 200, q);
  }
};

json train_body(std::uint64_t seed, std::size_t steps, const json& hidden = {4, 2}) {
  return {{"steps", steps}, {"spec", {{"seed", seed}, {"hidden", hidden}}}, {"init_seed", seed}};
}

std::string cell(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  return csv::format_double(v.get<double>());
}

}  // namespace

TEST_CASE("create, status and error mapping") {
  Service svc;
  Client c{svc};
  const std::string id = c.create();
  CHECK(id.size() == 16);
  CHECK(c.create() != id);
  const json s = c.call("GET", "/sessions/" + id + "/status");
  CHECK(s["state"] == "idle");
  CHECK(s["step"] == 0);

  const json e = c.call("GET", "/sessions/ffff/status", nullptr, 404);
  CHECK(e["code"] == "not_found");
  CHECK(e["message"].get<std::string>().find("ffff") != std::string::npos);
  CHECK(c.status("GET", "/nowhere") == 404);
  CHECK(c.status("PATCH", "/sessions/" + id) == 404);
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", "{not json") == 422);
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", R"({"kind":"moon"})") == 422);
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", R"({"points":-4})") == 422);
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", R"({"colour":"red"})") == 422);
  CHECK(c.status("POST", "/sessions/" + id + "/train", R"({"steps":5,"spec":{"hidden":[10]}})") == 422);
  CHECK(c.status("POST", "/sessions/" + id + "/train", R"({"steps":5,"spec":{"hidden":[1,1,1,1,1,1,1]}})") == 422);
  CHECK(c.status("POST", "/sessions/" + id + "/train", R"({"spec":{}})") == 422);
  CHECK(c.status("POST", "/sessions/" + id + "/train", R"({"steps":5,"init":"continue"})") == 409);
  CHECK(c.status("GET", "/sessions/" + id + "/measurements", "", {{"kind", "kl"}}) == 409);
  CHECK(c.status("GET", "/sessions/" + id + "/model") == 409);
  CHECK(c.status("PUT", "/sessions/" + id + "/trojan", R"({"fixture":"T99"})") == 404);
  CHECK(c.status("PUT", "/sessions/" + id + "/trojan", R"({"fixture":"T6"})") == 409);  // xor fixture
  CHECK(c.status("POST", "/sessions/" + id + "/memory/a/MR") == 404);
  CHECK(c.status("POST", "/sessions/" + id + "/memory/a/M*") == 422);
  // Still idle: failed requests change nothing.
  CHECK(c.call("GET", "/sessions/" + id)["has_model"] == false);
  CHECK(c.call("GET", "/sessions/" + id + "/log").empty());
}

TEST_CASE("dataset and trojan editing") {
  Service svc;
  Client c{svc};
  const std::string id = c.create();
  c.call("PUT", "/sessions/" + id + "/dataset", {{"kind", "circle"}, {"points", 200}, {"seed", 4}});
  json ds = c.call("GET", "/sessions/" + id + "/dataset");
  CHECK(ds["points"].size() == 200);
  CHECK(ds["trojan"].is_null());

  const json t = c.call("PUT", "/sessions/" + id + "/trojan", {{"fixture", "T1"}});
  CHECK(t["relabeled"].get<int>() > 0);
  ds = c.call("GET", "/sessions/" + id + "/dataset");
  int flagged = 0;
  for (std::size_t i = 0; i < ds["points"].size(); ++i) {
    if (ds["trojaned"][i] == 1) {
      ++flagged;
      CHECK(ds["labels"][i] == "N");
    }
  }
  CHECK(flagged == t["relabeled"].get<int>());

  // A custom region and then clearing it.
  const json custom = {{"id", "box"},
                       {"regions", {{{"shape", "polygon"},
                                     {"vertices", {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}},
                                     {"source", "P"},
                                     {"target", "N"}}}}};
  CHECK(c.call("PUT", "/sessions/" + id + "/trojan", custom)["relabeled"].get<int>() > 0);
  CHECK(c.status("PUT", "/sessions/" + id + "/trojan", R"({"regions":[{"shape":"disc","source":"P"}]})") == 422);
  c.call("PUT", "/sessions/" + id + "/trojan", {{"fixture", nullptr}});
  CHECK(c.call("GET", "/sessions/" + id + "/dataset")["trojan"].is_null());
  // A trojan pins the dataset kind until cleared.
  c.call("PUT", "/sessions/" + id + "/trojan", {{"fixture", "T1"}});
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", R"({"kind":"xor"})") == 409);
}

TEST_CASE("training job lifecycle") {
  Service svc;
  Client c{svc};
  const std::string id = c.create();
  const json started = c.call("POST", "/sessions/" + id + "/train", train_body(1, 300000), 202);
  CHECK(started["state"] == "running");
  CHECK(c.status("POST", "/sessions/" + id + "/train", train_body(1, 10).dump()) == 409);
  CHECK(c.status("PUT", "/sessions/" + id + "/dataset", R"({"seed":9})") == 409);
  CHECK(c.status("PUT", "/sessions/" + id + "/trojan", R"({"fixture":"T1"})") == 409);
  // Deleting cancels and joins the job.
  c.call("DELETE", "/sessions/" + id);
  CHECK(svc.session_count() == 0);
  CHECK(c.status("GET", "/sessions/" + id + "/status") == 404);

  const std::string id2 = c.create();
  c.call("POST", "/sessions/" + id2 + "/train", train_body(2, 400), 202);
  const json done = c.wait_done(id2);
  CHECK(done["state"] == "done");
  CHECK(done["step"] == 400);
  CHECK(done["losses"].size() == 400);
  CHECK(done["train_accuracy"].get<double>() > 0.5);
  CHECK(c.call("GET", "/sessions/" + id2 + "/status", nullptr, 200, {{"since", "390"}})["losses"].size() == 10);

  // Continue from the trained network; the architecture must match.
  CHECK(c.status("POST", "/sessions/" + id2 + "/train",
                 R"({"steps":5,"init":"continue","spec":{"hidden":[3]}})") == 409);
  c.call("POST", "/sessions/" + id2 + "/train", {{"steps", 50}, {"init", "continue"}, {"spec", {{"seed", 2}}}}, 202);
  CHECK(c.wait_done(id2)["state"] == "done");

  // A diverging job reports failure and keeps the previous network.
  const json before = c.call("GET", "/sessions/" + id2 + "/model");
  // An L2 rate this large overflows the penalty after one update.
  const json blowup = {{"learning_rate", 1.0}, {"regularization", "l2"}, {"regularization_rate", 1e300}};
  c.call("POST", "/sessions/" + id2 + "/train", {{"steps", 20}, {"spec", blowup}}, 202);
  const json failed = c.wait_done(id2);
  CHECK(failed["state"] == "failed");
  CHECK(failed["error"].get<std::string>().find("step") != std::string::npos);
  CHECK(c.call("GET", "/sessions/" + id2 + "/model") == before);
}

TEST_CASE("kl measurements equal the command-line inefficiency table") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nnf_service_kl";
  fs::create_directories(dir);
  const fs::path out = dir / "ineff.csv";
  const std::string cmd = std::string(NNF_CLI_PATH) +
                          " inefficiency --seed 5 --steps 600 --points 300 --noise 0.1 --hidden 4,3 --trojan T1 --out " +
                          out.string() + " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const csv::Table t = csv::parse(csv::read_file(out.string()));

  Service svc;
  Client c{svc};
  const std::string id = c.create();
  c.call("PUT", "/sessions/" + id + "/dataset", {{"kind", "circle"}, {"points", 300}, {"noise", 0.1}, {"seed", 5}});
  c.call("PUT", "/sessions/" + id + "/trojan", {{"fixture", "T1"}});
  c.call("POST", "/sessions/" + id + "/train", train_body(5, 600, {4, 3}), 202);
  REQUIRE(c.wait_done(id)["state"] == "done");
  const json rows = c.measure(id, "kl")["rows"];
  REQUIRE(rows.size() == t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < t.header.size(); ++k) {
      INFO(t.header[k] << " row " << r);
      CHECK(cell(rows[r][t.header[k]]) == t.rows[r][k]);
    }
  fs::remove_all(dir);
}

TEST_CASE("memory slots") {
  Service svc;
  Client c{svc};
  const std::string id = c.create();
  const std::string s = "/sessions/" + id;
  CHECK(c.status("POST", s + "/memory/a/M+") == 409);  // no network yet
  c.call("POST", s + "/train", train_body(3, 200), 202);
  c.wait_done(id);
  const json first = c.call("GET", s + "/model");

  json slot = c.call("POST", s + "/memory/a/M+")["slot"];
  CHECK(slot["holds"] == "model");
  CHECK(slot["net_count"] == 1);
  c.call("POST", s + "/memory/b/MS");

  c.call("POST", s + "/train", train_body(4, 200), 202);
  c.wait_done(id);
  const json second = c.call("GET", s + "/model");
  CHECK(second != first);
  c.call("POST", s + "/memory/a/M+");
  c.call("POST", s + "/memory/a/M-");
  // M+ first, M+ second, M- second leaves exactly the first network.
  const json restored = c.call("POST", s + "/memory/a/MR")["model"];
  CHECK(restored == first);
  CHECK(c.call("GET", s + "/model") == first);
  CHECK(c.call("POST", s + "/memory/b/MR")["model"] == first);

  // Mean retrieval of two stored networks.
  c.call("POST", s + "/memory/m/M+");
  c.call("POST", s + "/train", train_body(4, 200), 202);
  c.wait_done(id);
  c.call("POST", s + "/memory/m/M+");
  const json mean = c.call("POST", s + "/memory/m/MR", {{"mean", true}})["model"];
  const double w0 = first["layers"][0]["weights"][0], w1 = second["layers"][0]["weights"][0];
  CHECK(mean["layers"][0]["weights"][0].get<double>() == doctest::Approx((w0 + w1) / 2).epsilon(1e-14));

  // Architecture mismatch.
  c.call("POST", s + "/train", train_body(4, 50, {3}), 202);
  c.wait_done(id);
  const json e = c.call("POST", s + "/memory/a/M+", nullptr, 409);
  CHECK(e["code"] == "conflict");
  // Dataset payloads: shape mismatch against a model slot, and restore.
  CHECK(c.status("POST", s + "/memory/a/M+", R"({"target":"dataset"})") == 409);
  const json ds0 = c.call("GET", s + "/dataset");
  c.call("POST", s + "/memory/d/MS", {{"target", "dataset"}});
  c.call("PUT", s + "/dataset", {{"seed", 77}});
  CHECK(c.call("GET", s + "/dataset") != ds0);
  c.call("POST", s + "/memory/d/MR");
  CHECK(c.call("GET", s + "/dataset")["points"] == ds0["points"]);
  CHECK(c.status("POST", s + "/memory/d/MR", R"({"mean":true})") == 409);

  c.call("POST", s + "/memory/a/MC");
  json names = json::array();
  const json slots = c.call("GET", s + "/memory")["slots"];
  for (const auto& x : slots) names.push_back(x["slot"]);
  CHECK(names == json{"b", "d", "m"});
}

TEST_CASE("replaying the action log reproduces measurements; GET never mutates") {
  Service svc;
  Client c{svc};
  const std::string id = c.create();
  const std::string s = "/sessions/" + id;
  c.call("PUT", s + "/dataset", {{"kind", "circle"}, {"points", 200}, {"noise", 0.05}, {"seed", 8}});
  c.call("POST", s + "/train", train_body(6, 300), 202);
  c.wait_done(id);
  c.call("POST", s + "/memory/ref/MS");
  c.call("PUT", s + "/trojan", {{"fixture", "T1"}});
  c.call("POST", s + "/train", train_body(6, 300), 202);
  c.wait_done(id);
  CHECK(c.status("GET", s + "/measurements", "", {{"kind", "delta-vs-slot"}}) == 422);
  CHECK(c.status("GET", s + "/measurements", "", {{"kind", "delta-vs-slot"}, {"slot", "zz"}}) == 404);
  CHECK(c.status("GET", s + "/measurements", "", {{"kind", "wat"}}) == 422);
  CHECK(c.status("GET", s + "/measurements", "", {{"kind", "grid"}, {"resolution", "1"}}) == 422);

  auto snapshot = [&](const std::string& sid) {
    const std::string p = "/sessions/" + sid;
    json out;
    out["model"] = c.call("GET", p + "/model");
    out["dataset"] = c.call("GET", p + "/dataset");
    out["memory"] = c.call("GET", p + "/memory");
    for (const char* k : {"states", "kl", "utilization", "grid"}) out[k] = c.measure(sid, k);
    out["delta"] = c.measure(sid, "delta-vs-slot", {{"slot", "ref"}});
    out["quadrant"] = c.measure(sid, "quadrant", {{"slot", "ref"}, {"sigma", "0.25"}});
    out["predicted"] = c.measure(sid, "kl", {{"by_predicted", "true"}, {"include_output", "false"}});
    return out;
  };

  const json log = c.call("GET", s + "/log");
  CHECK(log.size() == 5);
  const json a = snapshot(id);
  CHECK(a["grid"]["probabilities"].size() == 50);
  CHECK(a["delta"]["rows"].size() == 3);
  CHECK(a["quadrant"]["verdict"].is_string());
  // Repeated GETs see identical state and leave the log alone.
  CHECK(snapshot(id) == a);
  CHECK(c.call("GET", s + "/log") == log);
  CHECK(c.call("GET", s + "/status")["state"] == "done");

  const std::string id2 = c.create();
  for (const auto& entry : log) {
    const std::string body = entry["body"].is_null() ? "" : entry["body"].dump();
    const Response r = svc.handle(entry["method"], "/sessions/" + id2 + entry["path"].get<std::string>(), {}, body);
    CHECK(r.status < 300);
    if (entry["path"] == "/train") c.wait_done(id2);
  }
  CHECK(snapshot(id2) == a);
}

TEST_CASE("idle sessions expire") {
  Clock::time_point now{};
  ServiceConfig cfg;
  cfg.idle_timeout = std::chrono::seconds(60);
  cfg.now = [&] { return now; };
  Service svc(cfg);
  Client c{svc};
  const std::string a = c.create();
  now += std::chrono::seconds(40);
  const std::string b = c.create();
  now += std::chrono::seconds(30);  // a idle 70 s, b idle 30 s
  CHECK(c.status("GET", "/sessions/" + a + "/status") == 404);
  CHECK(c.status("GET", "/sessions/" + b + "/status") == 200);
  now += std::chrono::seconds(59);
  CHECK(c.status("GET", "/sessions/" + b + "/status") == 200);  // access refreshed the clock
  // A running job does not keep a session alive; expiry cancels it.
  c.call("POST", "/sessions/" + b + "/train", train_body(1, 300000), 202);
  now += std::chrono::seconds(61);
  svc.expire_idle();
  CHECK(svc.session_count() == 0);
}

TEST_CASE("http binding") {
  Service svc;
  httplib::Server srv;
  svc.bind(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto created = cli.Post("/sessions", "", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
  const std::string id = json::parse(created->body)["id"];
  auto st = cli.Get("/sessions/" + id + "/status");
  REQUIRE(st);
  CHECK(json::parse(st->body)["state"] == "idle");
  auto missing = cli.Get("/sessions/0000/status");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["code"] == "not_found");
  auto put = cli.Put("/sessions/" + id + "/dataset", R"({"kind":"xor","points":100,"seed":2})", "application/json");
  REQUIRE(put);
  CHECK(put->status == 200);
  auto q = cli.Get("/sessions/" + id + "/measurements?kind=kl");
  REQUIRE(q);
  CHECK(q->status == 409);
  auto m = cli.Post("/sessions/" + id + "/memory/x/M+", R"({"target":"dataset"})", "application/json");
  REQUIRE(m);
  CHECK(m->status == 200);
  CHECK(json::parse(m->body)["slot"]["holds"] == "dataset");
  auto pre = cli.Options("/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);

  srv.stop();
  t.join();
}
