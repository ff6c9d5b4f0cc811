#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <memory>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"

namespace nnf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string sha256_bytes(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) == 1 &&
              EVP_DigestUpdate(ctx.get(), data.data(), data.size()) == 1 &&
              EVP_DigestFinal_ex(ctx.get(), md, &len) == 1,
          ErrorKind::data, "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace

std::string sha256_path(const std::string& path) {
  require(fs::exists(path), ErrorKind::data, "no such file or directory: " + path);
  if (!fs::is_directory(path)) return sha256_bytes(csv::read_file(path));
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    const std::string r = fs::relative(e.path(), path).generic_string();
    if (r != kManifestName) rel.push_back(r);
  }
  std::sort(rel.begin(), rel.end());
  std::string listing;
  for (const auto& r : rel) listing += r + '\0' + sha256_bytes(csv::read_file((fs::path(path) / r).string())) + '\n';
  return sha256_bytes(listing);
}

json Manifest::to_json() const {
  return {{"tool", "nnf"},
          {"version", NNF_VERSION},
          {"command", command},
          {"args", args},
          {"seeds", seeds},
          {"inputs", inputs},
          {"artifacts", artifacts},
          {"summary", summary}};
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  require(j.is_object() && j.value("tool", "") == "nnf", ErrorKind::data, "not an nnf run manifest");
  require(j.value("version", "") == NNF_VERSION, ErrorKind::data,
          "manifest was written by version " + j.value("version", "?") + ", this is " + NNF_VERSION);
  m.command = j.at("command").get<std::vector<std::string>>();
  m.args = j.at("args").get<std::map<std::string, std::vector<std::string>>>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::string>>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.summary = j.value("summary", json::object());
  return m;
}

std::vector<std::string> Manifest::argv() const {
  std::vector<std::string> out = command;
  for (const auto& [name, values] : args)
    for (const auto& v : values) out.push_back("--" + name + "=" + v);
  return out;
}

}  // namespace nnf::cli
