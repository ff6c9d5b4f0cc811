#include "nnf/error.hpp"

namespace nnf {

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace nnf
