#include "nnf/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/simd/kernels.hpp"

namespace nnf {

void FeatureSpec::validate() const {
  require(histogram_bins >= 2, ErrorKind::invalid, "histogram_bins must be >= 2");
  require(top_k_singulars >= 1, ErrorKind::invalid, "top_k_singulars must be >= 1");
}

std::vector<double> FeatureVector::values() const {
  std::vector<double> v;
  v.reserve(entries.size());
  for (const auto& e : entries) v.push_back(e.second);
  return v;
}

std::vector<std::string> FeatureVector::names() const {
  std::vector<std::string> v;
  v.reserve(entries.size());
  for (const auto& e : entries) v.push_back(e.first);
  return v;
}

namespace {

Matrix flatten_shape(const std::vector<std::size_t>& shape, std::vector<double> data, FlattenMode mode) {
  if (shape.empty()) return Matrix(1, 1, std::move(data));
  if (shape.size() == 1) {
    return mode == FlattenMode::rows_first ? Matrix(1, shape[0], std::move(data)) : Matrix(shape[0], 1, std::move(data));
  }
  std::size_t total = 1;
  for (auto s : shape) total *= s;
  if (mode == FlattenMode::rows_first) return Matrix(shape[0], shape[0] ? total / shape[0] : 0, std::move(data));
  return Matrix(shape.back() ? total / shape.back() : 0, shape.back(), std::move(data));
}

std::string bin_name(std::size_t b) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "b%03zu", b);
  return buf;
}

void emit_block(const std::string& prefix, const Matrix& m, const FeatureSpec& spec, std::vector<NamedValue>& out) {
  auto put = [&](const std::string& stat, double v) { out.emplace_back(prefix + stat, v); };
  const std::span<const double> w(m.values);
  const bool nonempty = !w.empty();
  const DescriptiveStats st = nonempty ? descriptive_stats(w) : DescriptiveStats{};

  std::vector<double> sigma;
  const bool need_svd = (spec.groups & (kNorms | kRanks | kSvd)) != 0 && m.rows > 0 && m.cols > 0;
  if (need_svd) sigma = singular_values(m);
  const double smax = sigma.empty() ? 0.0 : sigma.front();
  const double smin = sigma.empty() ? 0.0 : sigma.back();
  const double frob2 = simd::sum_squares(w);

  if (spec.groups & kBasicStats) {
    put("min", st.min);
    put("max", st.max);
    put("mean", st.mean);
    put("median", st.median);
    put("std", st.std);
    put("variance", st.variance);
  }
  if (spec.groups & kNorms) {
    double nuclear = 0.0;
    for (double s : sigma) nuclear += s;
    put("l1", simd::abs_sum(w));
    put("l2", std::sqrt(frob2));
    put("frobenius", std::sqrt(frob2));
    put("spectral", smax);
    put("nuclear", nuclear);
  }
  if (spec.groups & kRanks) {
    std::size_t rank = 0;
    for (double s : sigma) rank += (s > 1e-10 * smax && smax > 0.0) ? 1 : 0;
    put("rank", static_cast<double>(rank));
    const bool stable_ok = smax > 0.0;
    put("stable_rank", stable_ok ? frob2 / (smax * smax) : 0.0);
    put("stable_rank_defined", stable_ok ? 1.0 : 0.0);
    const bool cond_ok = smin > 1e-300;
    put("condition_number", cond_ok ? smax / smin : 1e300);
    put("condition_number_defined", cond_ok ? 1.0 : 0.0);
  }
  if (spec.groups & kHistogram) {
    double lo = st.min, hi = st.max;
    if (!(lo < hi)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const Histogram raw = nonempty ? histogram_entropy(w, spec.histogram_bins, lo, hi) : Histogram{};
    const double n = nonempty ? static_cast<double>(w.size()) : 1.0;
    for (std::size_t b = 0; b < spec.histogram_bins; ++b) {
      put("hist_" + bin_name(b), raw.counts.empty() ? 0.0 : static_cast<double>(raw.counts[b]) / n);
    }
    put("hist_entropy", raw.entropy_bits);
    std::vector<double> absw(w.size());
    double amax = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      absw[i] = std::fabs(w[i]);
      amax = std::max(amax, absw[i]);
    }
    const Histogram ab =
        nonempty ? histogram_entropy(absw, spec.histogram_bins, 0.0, amax > 0.0 ? amax : 1.0) : Histogram{};
    put("abs_hist_entropy", ab.entropy_bits);
  }
  if (spec.groups & kMoments) {
    put("skewness", st.skewness);
    put("skewness_defined", st.shape_defined ? 1.0 : 0.0);
    put("excess_kurtosis", st.excess_kurtosis);
    put("excess_kurtosis_defined", st.shape_defined ? 1.0 : 0.0);
    for (int k = 2; k <= 5; ++k) put("central_moment_" + std::to_string(k), st.central_moments[k]);
  }
  if (spec.groups & kSvd) {
    for (std::size_t k = 0; k < spec.top_k_singulars; ++k) {
      put("sv_" + std::to_string(k + 1), k < sigma.size() ? sigma[k] : 0.0);
    }
    put("sv_count", static_cast<double>(sigma.size()));
    put("sv_max", smax);
    put("sv_min", smin);
    double mean = 0.0;
    for (double s : sigma) mean += s;
    put("sv_mean", sigma.empty() ? 0.0 : mean / static_cast<double>(sigma.size()));
    put("spectral_entropy", entropy_bits(sigma));
  }
}

}  // namespace

Matrix flatten_to_matrix(const TensorRecord& t, FlattenMode mode) { return flatten_shape(t.shape, t.data, mode); }

std::vector<NamedValue> tensor_features(const TensorRecord& t, const FeatureSpec& spec) {
  spec.validate();
  std::vector<NamedValue> out;
  if (spec.scope == Scope::global || t.rank() <= 1 || t.shape[0] == 0) {
    emit_block(t.name + "/all/", flatten_to_matrix(t, spec.flatten_mode), spec, out);
    return out;
  }
  // Channel slices along the leading dimension.
  const std::size_t channels = t.shape[0];
  const std::size_t per = t.numel() / channels;
  const std::vector<std::size_t> slice_shape(t.shape.begin() + 1, t.shape.end());
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> data(t.data.begin() + static_cast<std::ptrdiff_t>(c * per),
                             t.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
    emit_block(t.name + "/c" + std::to_string(c) + "/", flatten_shape(slice_shape, std::move(data), spec.flatten_mode),
               spec, out);
  }
  return out;
}

FeatureVector extract_model_features(const ModelContainer& m, const FeatureSpec& spec, std::string model_id) {
  require(!m.empty(), ErrorKind::invalid, "cannot extract features from an empty container");
  FeatureVector fv;
  fv.model_id = std::move(model_id);
  for (const auto& t : m.tensors()) {
    auto block = tensor_features(t, spec);
    fv.entries.insert(fv.entries.end(), std::make_move_iterator(block.begin()), std::make_move_iterator(block.end()));
  }
  return fv;
}

std::string features_to_csv(const std::vector<FeatureVector>& rows) {
  csv::Table t;
  t.header.push_back("model_id");
  if (!rows.empty()) {
    for (const auto& e : rows.front().entries) t.header.push_back(e.first);
  }
  for (const auto& fv : rows) {
    require(fv.entries.size() + 1 == t.header.size(), ErrorKind::invalid,
            "feature vectors of different widths cannot share one table");
    std::vector<std::string> r{fv.model_id};
    for (std::size_t i = 0; i < fv.entries.size(); ++i) {
      require(fv.entries[i].first == t.header[i + 1], ErrorKind::invalid, "feature name order differs between models");
      r.push_back(csv::format_double(fv.entries[i].second));
    }
    t.rows.push_back(std::move(r));
  }
  return csv::format(t);
}

std::vector<FeatureVector> features_from_csv(const std::string& text) {
  const csv::Table t = csv::parse(text);
  require(!t.header.empty() && t.header[0] == "model_id", ErrorKind::data, "feature CSV must start with model_id");
  std::vector<FeatureVector> out;
  for (const auto& r : t.rows) {
    FeatureVector fv;
    fv.model_id = r[0];
    for (std::size_t i = 1; i < r.size(); ++i) fv.entries.emplace_back(t.header[i], csv::parse_double(r[i]));
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace nnf
