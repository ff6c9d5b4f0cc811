#include "nnf/playground/memory.hpp"

#include "nnf/error.hpp"

namespace nnf::playground {

namespace {

void accumulate(Mlp& acc, const Mlp& m, double sign) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    auto& A = acc.layers[l];
    const auto& B = m.layers[l];
    for (std::size_t i = 0; i < A.weights.size(); ++i) A.weights[i] += sign * B.weights[i];
    for (std::size_t i = 0; i < A.bias.size(); ++i) A.bias[i] += sign * B.bias[i];
  }
}

}  // namespace

MemoryOp parse_memory_op(const std::string& s) {
  if (s == "store" || s == "MS") return MemoryOp::store;
  if (s == "retrieve" || s == "MR") return MemoryOp::retrieve;
  if (s == "add" || s == "M+") return MemoryOp::add;
  if (s == "subtract" || s == "M-") return MemoryOp::subtract;
  if (s == "clear" || s == "MC") return MemoryOp::clear;
  fail(ErrorKind::invalid, "unknown memory op: " + s);
}

const char* memory_op_name(MemoryOp op) {
  switch (op) {
    case MemoryOp::store: return "store";
    case MemoryOp::retrieve: return "retrieve";
    case MemoryOp::add: return "add";
    case MemoryOp::subtract: return "subtract";
    case MemoryOp::clear: return "clear";
  }
  return "?";
}

bool MemorySlot::holds_model() const { return !terms_.empty() && std::holds_alternative<Mlp>(terms_[0].payload); }

long MemorySlot::net_count() const {
  long n = 0;
  for (const auto& t : terms_) n += t.negative ? -1 : 1;
  return n;
}

void MemorySlot::check_compatible(const Payload& p) const {
  if (terms_.empty()) return;
  const Payload& first = terms_[0].payload;
  require(first.index() == p.index(), ErrorKind::conflict, "slot holds a different payload type");
  if (const auto* m = std::get_if<Mlp>(&p)) {
    require(std::get<Mlp>(first).same_architecture(*m), ErrorKind::conflict, "network architecture mismatch");
  } else {
    require(std::get<Dataset2D>(first).kind == std::get<Dataset2D>(p).kind, ErrorKind::conflict,
            "dataset kind mismatch");
  }
}

void MemorySlot::store(Payload p) {
  if (const auto* m = std::get_if<Mlp>(&p)) m->validate();
  else std::get<Dataset2D>(p).validate();
  terms_.clear();
  terms_.push_back({std::move(p), false});
}

void MemorySlot::add(Payload p) {
  if (terms_.empty()) return store(std::move(p));
  check_compatible(p);
  for (std::size_t i = terms_.size(); i-- > 0;) {
    if (terms_[i].negative && terms_[i].payload == p) {
      terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(i));
      return;
    }
  }
  terms_.push_back({std::move(p), false});
}

void MemorySlot::subtract(Payload p) {
  require(!terms_.empty(), ErrorKind::not_found, "memory slot is empty");
  check_compatible(p);
  for (std::size_t i = terms_.size(); i-- > 0;) {
    if (!terms_[i].negative && terms_[i].payload == p) {
      terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(i));
      return;
    }
  }
  require(std::holds_alternative<Mlp>(p), ErrorKind::conflict, "dataset is not part of the slot");
  terms_.push_back({std::move(p), true});
}

Payload MemorySlot::retrieve() const {
  require(!terms_.empty(), ErrorKind::not_found, "memory slot is empty");
  if (holds_model()) {
    Mlp acc = std::get<Mlp>(terms_[0].payload);
    if (terms_[0].negative) accumulate(acc, acc, -2.0);
    for (std::size_t i = 1; i < terms_.size(); ++i)
      accumulate(acc, std::get<Mlp>(terms_[i].payload), terms_[i].negative ? -1.0 : 1.0);
    return acc;
  }
  Dataset2D acc = std::get<Dataset2D>(terms_[0].payload);
  for (std::size_t i = 1; i < terms_.size(); ++i) {
    const auto& d = std::get<Dataset2D>(terms_[i].payload);
    acc.points.insert(acc.points.end(), d.points.begin(), d.points.end());
    acc.labels.insert(acc.labels.end(), d.labels.begin(), d.labels.end());
    acc.trojaned.insert(acc.trojaned.end(), d.trojaned.begin(), d.trojaned.end());
  }
  return acc;
}

Mlp MemorySlot::retrieve_mean() const {
  require(holds_model(), ErrorKind::conflict, "slot does not hold a network");
  const long k = net_count();
  require(k > 0, ErrorKind::invalid, "slot has no net positive terms to average");
  Mlp m = std::get<Mlp>(retrieve());
  const double s = 1.0 / static_cast<double>(k);
  for (auto& L : m.layers) {
    for (auto& w : L.weights) w *= s;
    for (auto& b : L.bias) b *= s;
  }
  return m;
}

const MemorySlot* Memory::find(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

std::vector<std::string> Memory::names() const {
  std::vector<std::string> out;
  for (const auto& [name, slot] : slots_)
    if (!slot.empty()) out.push_back(name);
  return out;
}

std::optional<Payload> Memory::apply(const std::string& name, MemoryOp op, std::optional<Payload> payload) {
  const bool needs_payload = op == MemoryOp::store || op == MemoryOp::add || op == MemoryOp::subtract;
  require(!needs_payload || payload.has_value(), ErrorKind::invalid,
          std::string(memory_op_name(op)) + " needs a payload");
  switch (op) {
    case MemoryOp::store: slot(name).store(std::move(*payload)); return std::nullopt;
    case MemoryOp::add: slot(name).add(std::move(*payload)); return std::nullopt;
    case MemoryOp::subtract: slot(name).subtract(std::move(*payload)); return std::nullopt;
    case MemoryOp::clear: slot(name).clear(); return std::nullopt;
    case MemoryOp::retrieve: {
      const MemorySlot* s = find(name);
      require(s != nullptr, ErrorKind::not_found, "memory slot " + name + " is empty");
      return s->retrieve();
    }
  }
  return std::nullopt;
}

}  // namespace nnf::playground
