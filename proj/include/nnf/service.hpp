#pragma once
// HTTP facade over the playground: sessions holding a dataset, an optional
// trojan, a network, one background training job and named memory slots.
//
// Routes (JSON bodies; errors are {"code", "message"} with 404 unknown
// session or slot, 409 conflicting state, 422 invalid input):
//   POST   /sessions                               -> 201 {"id"}
//   GET    /sessions/{id}                          session summary
//   PUT    /sessions/{id}/dataset                  {kind, points, noise, seed}
//   GET    /sessions/{id}/dataset                  points, labels, trojan regions
//   PUT    /sessions/{id}/trojan                   {fixture} | {id, regions} | {fixture: null}
//   POST   /sessions/{id}/train                    {steps, spec, init, init_seed} -> 202
//   GET    /sessions/{id}/status                   job state and loss curve
//   GET    /sessions/{id}/model                    current network coefficients
//   GET    /sessions/{id}/measurements?kind=...    states | kl | utilization |
//                                                  delta-vs-slot | quadrant | grid
//   GET    /sessions/{id}/memory                   non-empty slot names
//   POST   /sessions/{id}/memory/{slot}/{op}       {target: model | dataset, mean}
//   GET    /sessions/{id}/log                      replayable mutating requests
//   DELETE /sessions/{id}
// GET requests never mutate a session.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace httplib {
class Server;
}

namespace nnf::service {

using Clock = std::chrono::steady_clock;

struct ServiceConfig {
  std::chrono::seconds idle_timeout{3600};
  std::uint64_t seed = 0;             // session ids derive from it
  std::function<Clock::time_point()> now;  // defaults to Clock::now
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

struct Session;

class Service {
 public:
  explicit Service(ServiceConfig cfg = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const std::string& method, const std::string& path,
                  const std::map<std::string, std::string>& query, const std::string& body);
  // Routes every request on `srv` through handle().
  void bind(httplib::Server& srv);

  std::size_t session_count() const;
  // Drops sessions idle for longer than the timeout, cancelling their jobs.
  void expire_idle();

 private:
  std::shared_ptr<Session> find(const std::string& id);

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t created_ = 0;
};

// Blocks serving on host:port until the process is stopped.
void serve(const std::string& host, int port, ServiceConfig cfg);

}  // namespace nnf::service
