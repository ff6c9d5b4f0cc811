#include "nnf/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"
#include "nnf/error.hpp"

namespace nnf {

using ojson = nlohmann::ordered_json;

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }
const char* dtype_tag(DType d) { return d == DType::f32 ? "F32" : "F64"; }

std::size_t TensorRecord::numel() const {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void ModelContainer::add(TensorRecord t) {
  require(!t.name.empty(), ErrorKind::invalid, "tensor name must be nonempty");
  require(t.name != "__metadata__", ErrorKind::invalid, "reserved tensor name '__metadata__'");
  require(!contains(t.name), ErrorKind::invalid, "duplicate tensor name '" + t.name + "'");
  require(t.numel() == t.data.size(), ErrorKind::invalid,
          "tensor '" + t.name + "': shape implies " + std::to_string(t.numel()) + " elements, got " +
              std::to_string(t.data.size()));
  for (double& v : t.data) {
    if (t.dtype == DType::f32) v = static_cast<double>(static_cast<float>(v));
    require(std::isfinite(v), ErrorKind::invalid, "tensor '" + t.name + "' holds a non-finite value");
  }
  tensors_.push_back(std::move(t));
}

void ModelContainer::set_metadata(std::string key, std::string value) {
  metadata_[std::move(key)] = std::move(value);
}

std::string ModelContainer::metadata_or(const std::string& key, const std::string& fallback) const {
  auto it = metadata_.find(key);
  return it == metadata_.end() ? fallback : it->second;
}

bool ModelContainer::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const TensorRecord& t) { return t.name == name; });
}

const TensorRecord& get_tensor(const ModelContainer& m, const std::string& name) {
  for (const auto& t : m.tensors()) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::not_found, "unknown tensor '" + name + "'");
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

DType parse_dtype(const std::string& tag, const std::string& name) {
  if (tag == "F32") return DType::f32;
  if (tag == "F64") return DType::f64;
  fail(ErrorKind::data, "tensor '" + name + "': unsupported dtype '" + tag + "' (only F32/F64)");
}

std::uint64_t as_u64(const ojson& v, const std::string& what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(ErrorKind::data, "malformed header: " + what + " must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

ojson parse_header(std::string_view text) {
  // Track keys per open object so duplicates are rejected instead of silently
  // overwritten.
  std::vector<std::set<std::string>> open;
  std::string duplicate;
  auto cb = [&](int, ojson::parse_event_t ev, ojson& parsed) {
    switch (ev) {
      case ojson::parse_event_t::object_start: open.emplace_back(); break;
      case ojson::parse_event_t::object_end:
        if (!open.empty()) open.pop_back();
        break;
      case ojson::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!open.empty() && !open.back().insert(key).second && duplicate.empty()) duplicate = key;
        break;
      }
      default: break;
    }
    return true;
  };
  ojson header;
  try {
    header = ojson::parse(text.begin(), text.end(), cb);
  } catch (const ojson::exception& e) {
    fail(ErrorKind::data, std::string("malformed header: ") + e.what());
  }
  if (!duplicate.empty()) fail(ErrorKind::data, "duplicate name '" + duplicate + "' in header");
  if (!header.is_object()) fail(ErrorKind::data, "malformed header: top level is not an object");
  return header;
}

}  // namespace

ModelContainer read_container(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8, ErrorKind::data, "malformed header: fewer than 8 bytes");
  const std::uint64_t n = get_u64(bytes.data());
  require(n <= bytes.size() - 8, ErrorKind::data, "malformed header: header length exceeds file size");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data() + 8), static_cast<std::size_t>(n));
  const ojson header = parse_header(text);

  const std::uint8_t* buffer = bytes.data() + 8 + n;
  const std::uint64_t buffer_size = bytes.size() - 8 - n;

  ModelContainer out;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& [key, entry] : header.items()) {
    if (key == "__metadata__") {
      require(entry.is_object(), ErrorKind::data, "malformed header: __metadata__ must be an object");
      for (const auto& [mk, mv] : entry.items()) {
        require(mv.is_string(), ErrorKind::data, "malformed header: metadata value for '" + mk + "' is not a string");
        out.set_metadata(mk, mv.get<std::string>());
      }
      continue;
    }
    require(entry.is_object() && entry.contains("dtype") && entry.contains("shape") && entry.contains("data_offsets"),
            ErrorKind::data, "malformed header: entry '" + key + "' lacks dtype/shape/data_offsets");
    require(entry["dtype"].is_string(), ErrorKind::data, "malformed header: dtype of '" + key + "'");
    TensorRecord t;
    t.name = key;
    t.dtype = parse_dtype(entry["dtype"].get<std::string>(), key);
    const auto& shape = entry["shape"];
    const auto& offs = entry["data_offsets"];
    require(shape.is_array(), ErrorKind::data, "malformed header: shape of '" + key + "' is not an array");
    require(offs.is_array() && offs.size() == 2, ErrorKind::data,
            "malformed header: data_offsets of '" + key + "' must be [begin, end]");
    for (const auto& s : shape) t.shape.push_back(static_cast<std::size_t>(as_u64(s, "shape extent")));
    const std::uint64_t begin = as_u64(offs[0], "offset");
    const std::uint64_t end = as_u64(offs[1], "offset");
    require(begin <= end && end <= buffer_size, ErrorKind::data, "tensor '" + key + "': data range out of bounds");
    const std::size_t width = dtype_size(t.dtype);
    require(end - begin == static_cast<std::uint64_t>(t.numel()) * width, ErrorKind::data,
            "tensor '" + key + "': byte range does not match shape");
    ranges.emplace_back(begin, end);

    t.data.resize(t.numel());
    const std::uint8_t* p = buffer + begin;
    for (std::size_t i = 0; i < t.data.size(); ++i, p += width) {
      if (t.dtype == DType::f32) {
        std::uint32_t bits = 0;
        for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
        t.data[i] = static_cast<double>(std::bit_cast<float>(bits));
      } else {
        t.data[i] = std::bit_cast<double>(get_u64(p));
      }
      require(std::isfinite(t.data[i]), ErrorKind::data, "tensor '" + key + "' holds a non-finite value");
    }
    out.add(std::move(t));
  }

  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    // Empty ranges occupy no bytes and cannot overlap anything.
    if (ranges[i].first == ranges[i].second) continue;
    require(ranges[i].first >= ranges[i - 1].second, ErrorKind::data, "overlapping ranges in tensor buffer");
  }
  return out;
}

std::vector<std::uint8_t> write_container(const ModelContainer& m) {
  ojson header = ojson::object();
  if (!m.metadata().empty()) {
    ojson meta = ojson::object();
    for (const auto& [k, v] : m.metadata()) meta[k] = v;
    header["__metadata__"] = std::move(meta);
  }
  std::uint64_t offset = 0;
  for (const auto& t : m.tensors()) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.numel()) * dtype_size(t.dtype);
    ojson entry = ojson::object();
    entry["dtype"] = dtype_tag(t.dtype);
    entry["shape"] = t.shape;
    entry["data_offsets"] = {offset, offset + bytes};
    header[t.name] = std::move(entry);
    offset += bytes;
  }
  std::string text = header.dump();
  // Pad with spaces so the buffer starts on an 8-byte boundary.
  while (text.size() % 8 != 0) text.push_back(' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : m.tensors()) {
    for (double v : t.data) {
      if (t.dtype == DType::f32) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      } else {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

ModelContainer load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_container(bytes);
}

void save_container(const ModelContainer& m, const std::string& path) {
  const auto bytes = write_container(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace nnf
