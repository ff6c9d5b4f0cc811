#pragma once
// Run manifests: the exact command line of a run plus SHA-256 digests of its
// inputs and artifacts, so the run can be replayed and checked byte for byte.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace nnf::cli {

inline constexpr const char* kManifestName = "manifest.json";

// Lowercase hex SHA-256 of a file. A directory digests its sorted relative
// paths and file digests, skipping a top-level manifest.json.
std::string sha256_path(const std::string& path);

struct Manifest {
  std::vector<std::string> command;                       // e.g. {"ensemble", "lasso"}
  std::map<std::string, std::vector<std::string>> args;   // long option name -> values
  std::map<std::string, std::string> seeds;
  std::map<std::string, std::string> inputs;     // path -> digest
  std::map<std::string, std::string> artifacts;  // path -> digest
  nlohmann::json summary = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  // Arguments that re-run the command: the command path then --name=value.
  std::vector<std::string> argv() const;
};

}  // namespace nnf::cli
