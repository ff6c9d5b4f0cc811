#pragma once
// Model weight containers and their on-disk format.
//
// Layout (all integers little-endian):
//   u64 N | N bytes of UTF-8 JSON header | raw tensor buffer
// The header maps tensor name -> {"dtype": "F32"|"F64", "shape": [...],
// "data_offsets": [begin, end)} and may carry a "__metadata__" string map.
// Offsets are relative to the start of the buffer. This is the safetensors
// convention restricted to real floating-point dtypes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace nnf {

enum class DType { f32, f64 };

std::size_t dtype_size(DType d);
const char* dtype_tag(DType d);

struct TensorRecord {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::size_t> shape;  // empty = scalar
  std::vector<double> data;        // row-major; f32 values are stored exactly

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }

  bool operator==(const TensorRecord&) const = default;
};

class ModelContainer {
 public:
  ModelContainer() = default;

  // Appends a tensor. Throws on an empty or duplicate name, a shape/data size
  // mismatch, or a non-finite value. f32 tensors are rounded to float on entry.
  void add(TensorRecord t);
  void set_metadata(std::string key, std::string value);

  const std::vector<TensorRecord>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::string metadata_or(const std::string& key, const std::string& fallback) const;

  bool contains(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }

  bool operator==(const ModelContainer&) const = default;

 private:
  std::vector<TensorRecord> tensors_;
  std::map<std::string, std::string> metadata_;
};

// Case-sensitive lookup; throws ErrorKind::not_found for unknown names.
const TensorRecord& get_tensor(const ModelContainer& m, const std::string& name);

ModelContainer read_container(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_container(const ModelContainer& m);

ModelContainer load_container(const std::string& path);
void save_container(const ModelContainer& m, const std::string& path);

}  // namespace nnf
