#pragma once
// Weight-statistics feature extraction: per-tensor (global) or per-channel
// (local) blocks of basic statistics, norms, rank measures, histograms, higher
// moments and singular-value summaries.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nnf/numerics.hpp"
#include "nnf/tensor_store.hpp"

namespace nnf {

enum class Scope { local, global };
enum class FlattenMode { rows_first, cols_first };

enum FeatureGroup : std::uint32_t {
  kBasicStats = 1u << 0,
  kNorms = 1u << 1,
  kRanks = 1u << 2,
  kHistogram = 1u << 3,
  kMoments = 1u << 4,
  kSvd = 1u << 5,
  kAllGroups = 0x3f,
};

struct FeatureSpec {
  Scope scope = Scope::global;
  FlattenMode flatten_mode = FlattenMode::rows_first;
  std::size_t histogram_bins = 100;
  std::size_t top_k_singulars = 10;
  std::uint32_t groups = kAllGroups;

  void validate() const;
};

using NamedValue = std::pair<std::string, double>;

struct FeatureVector {
  std::string model_id;
  std::vector<NamedValue> entries;

  std::vector<double> values() const;
  std::vector<std::string> names() const;
};

// rows_first: shape[0] x prod(shape[1:]); cols_first: prod(shape[:-1]) x shape[-1].
// Scalars become 1x1; rank-1 tensors 1xN (rows_first) or Nx1 (cols_first).
Matrix flatten_to_matrix(const TensorRecord& t, FlattenMode mode);

// Feature block(s) for one tensor, names prefixed "<tensor>/<slice>/".
std::vector<NamedValue> tensor_features(const TensorRecord& t, const FeatureSpec& spec);

FeatureVector extract_model_features(const ModelContainer& m, const FeatureSpec& spec, std::string model_id);

// One row per model, one column per feature; values in shortest round-trip form.
std::string features_to_csv(const std::vector<FeatureVector>& rows);
std::vector<FeatureVector> features_from_csv(const std::string& text);

}  // namespace nnf
