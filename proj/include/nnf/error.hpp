#pragma once

#include <stdexcept>
#include <string>

namespace nnf {

// Broad failure classes. The CLI maps them onto exit codes (usage 2, data 3,
// numeric 4); the HTTP service maps them onto status codes.
enum class ErrorKind { usage, data, numeric, not_found, conflict, invalid };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace nnf
