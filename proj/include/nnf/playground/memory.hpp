#pragma once
// Calculator memory: named slots holding a network or a dataset, with store
// (MS), retrieve (MR), add (M+), subtract (M-) and clear (MC).
//
// A slot keeps its signed terms and folds them on retrieval, so subtracting a
// payload that was added cancels that term exactly instead of relying on
// floating-point (a + b) - b == a.

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nnf/playground/dataset.hpp"
#include "nnf/playground/mlp.hpp"

namespace nnf::playground {

using Payload = std::variant<Mlp, Dataset2D>;

enum class MemoryOp { store, retrieve, add, subtract, clear };
MemoryOp parse_memory_op(const std::string& s);
const char* memory_op_name(MemoryOp op);

class MemorySlot {
 public:
  bool empty() const { return terms_.empty(); }
  bool holds_model() const;
  // Positive minus negative terms.
  long net_count() const;

  void store(Payload p);
  // Models: elementwise sum; datasets: concatenation. Cancels an identical
  // negative term when one exists. Shape mismatch -> conflict.
  void add(Payload p);
  // Cancels the most recent identical positive term when one exists; otherwise
  // models gain a negative term and datasets fail with conflict.
  void subtract(Payload p);
  void clear() { terms_.clear(); }

  // Throws not_found when empty.
  Payload retrieve() const;
  // Model sum scaled by 1/net_count(); the averaging read.
  Mlp retrieve_mean() const;

 private:
  struct Term {
    Payload payload;
    bool negative = false;
  };
  void check_compatible(const Payload& p) const;
  std::vector<Term> terms_;
};

class Memory {
 public:
  MemorySlot& slot(const std::string& name) { return slots_[name]; }
  const MemorySlot* find(const std::string& name) const;
  // Names of non-empty slots in ascending order.
  std::vector<std::string> names() const;
  // Applies op; returns the payload for retrieve.
  std::optional<Payload> apply(const std::string& name, MemoryOp op, std::optional<Payload> payload);

 private:
  std::map<std::string, MemorySlot> slots_;
};

}  // namespace nnf::playground
