#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "doctest.h"
#include "nnf/features.hpp"
#include "nnf/random.hpp"

using namespace nnf;

namespace {

std::map<std::string, double> as_map(const std::vector<NamedValue>& v) { return {v.begin(), v.end()}; }

TensorRecord tensor(std::string name, std::vector<std::size_t> shape, std::vector<double> data) {
  return TensorRecord{std::move(name), DType::f64, std::move(shape), std::move(data)};
}

TensorRecord random_tensor(Rng& rng, std::string name, std::size_t r, std::size_t c) {
  std::vector<double> d(r * c);
  for (auto& v : d) v = rng.normal();
  return tensor(std::move(name), {r, c}, std::move(d));
}

}  // namespace

TEST_CASE("flattening shapes") {
  const auto t = tensor("w", {2, 3, 4}, std::vector<double>(24, 1.0));
  auto m = flatten_to_matrix(t, FlattenMode::rows_first);
  CHECK((m.rows == 2 && m.cols == 12));
  m = flatten_to_matrix(t, FlattenMode::cols_first);
  CHECK((m.rows == 6 && m.cols == 4));
  const auto v = tensor("b", {6}, std::vector<double>(6, 1.0));
  m = flatten_to_matrix(v, FlattenMode::cols_first);
  CHECK((m.rows == 6 && m.cols == 1));
  m = flatten_to_matrix(v, FlattenMode::rows_first);
  CHECK((m.rows == 1 && m.cols == 6));
  m = flatten_to_matrix(tensor("s", {}, {3.0}), FlattenMode::rows_first);
  CHECK((m.rows == 1 && m.cols == 1));
}

TEST_CASE("flattening mode changes the spectrum of a 3-d tensor") {
  Rng rng(4);
  std::vector<double> d(24);
  for (auto& v : d) v = rng.normal();
  const auto t = tensor("w", {2, 3, 4}, d);
  const auto a = singular_values(flatten_to_matrix(t, FlattenMode::rows_first));
  const auto b = singular_values(flatten_to_matrix(t, FlattenMode::cols_first));
  CHECK(a != b);
}

TEST_CASE("identity and low-rank worked examples") {
  const auto f = as_map(tensor_features(tensor("I", {3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), {}));
  CHECK(f.at("I/all/rank") == 3);
  CHECK(f.at("I/all/stable_rank") == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(f.at("I/all/condition_number") == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.at("I/all/nuclear") == doctest::Approx(3.0).epsilon(1e-14));

  const auto r1 = as_map(tensor_features(tensor("u", {2, 3}, {1, 2, 3, 2, 4, 6}), {}));
  CHECK(r1.at("u/all/stable_rank") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r1.at("u/all/rank") == 1);

  const auto dg = as_map(tensor_features(tensor("d", {2, 2}, {2, 0, 0, 1}), {}));
  CHECK(dg.at("d/all/frobenius") == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(dg.at("d/all/spectral") == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(dg.at("d/all/stable_rank") == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(dg.at("d/all/l1") == 3.0);
}

TEST_CASE("undefined features carry flags and the condition sentinel") {
  const auto z = as_map(tensor_features(tensor("z", {2, 2}, {0, 0, 0, 0}), {}));
  CHECK(z.at("z/all/condition_number") == 1e300);
  CHECK(z.at("z/all/condition_number_defined") == 0);
  CHECK(z.at("z/all/skewness") == 0);
  CHECK(z.at("z/all/skewness_defined") == 0);
  CHECK(z.at("z/all/stable_rank_defined") == 0);
  for (const auto& [k, v] : z) CHECK(std::isfinite(v));
}

TEST_CASE("block order and local slicing") {
  FeatureSpec spec;
  spec.groups = kBasicStats | kSvd;
  spec.top_k_singulars = 2;
  const auto g = tensor_features(tensor("w", {3, 2}, {1, 2, 3, 4, 5, 6}), spec);
  CHECK(g.front().first == "w/all/min");
  CHECK(g[6].first == "w/all/sv_1");
  spec.scope = Scope::local;
  const auto l = tensor_features(tensor("w", {3, 2}, {1, 2, 3, 4, 5, 6}), spec);
  CHECK(l.size() == 3 * g.size());
  CHECK(l.front().first == "w/c0/min");
  CHECK(as_map(l).at("w/c2/max") == 6.0);
}

TEST_CASE("model extraction concatenates tensor blocks and is deterministic") {
  Rng rng(1);
  ModelContainer m;
  m.add(random_tensor(rng, "a", 4, 3));
  m.add(random_tensor(rng, "b", 1, 4));
  const FeatureSpec spec;
  const auto v = extract_model_features(m, spec, "m0");
  const auto a = tensor_features(m.tensors()[0], spec);
  const auto b = tensor_features(m.tensors()[1], spec);
  REQUIRE(v.entries.size() == a.size() + b.size());
  CHECK(std::equal(a.begin(), a.end(), v.entries.begin()));
  CHECK(v.entries == extract_model_features(m, spec, "m0").entries);
  auto names = v.names();
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("permutation and scaling invariances") {
  Rng rng(12);
  const auto t = random_tensor(rng, "w", 5, 4);
  // Row permutation (hidden-unit reorder).
  auto p = t;
  const std::size_t perm[5] = {2, 4, 0, 1, 3};
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) p.data[r * 4 + c] = t.data[perm[r] * 4 + c];
  const auto fa = as_map(tensor_features(t, {})), fb = as_map(tensor_features(p, {}));
  for (const char* k : {"min", "max", "mean", "median", "std", "l1", "frobenius", "spectral", "nuclear", "stable_rank",
                        "condition_number", "hist_entropy", "abs_hist_entropy", "skewness", "sv_3"}) {
    CAPTURE(k);
    CHECK(fb.at(std::string("w/all/") + k) == doctest::Approx(fa.at(std::string("w/all/") + k)).epsilon(1e-9));
  }
  auto s = t;
  for (auto& v : s.data) v *= 3.0;
  const auto fs = as_map(tensor_features(s, {}));
  for (const char* k : {"l1", "l2", "frobenius", "nuclear"}) {
    CHECK(fs.at(std::string("w/all/") + k) == doctest::Approx(3.0 * fa.at(std::string("w/all/") + k)).epsilon(1e-12));
  }
  CHECK(fs.at("w/all/condition_number") == doctest::Approx(fa.at("w/all/condition_number")).epsilon(1e-9));
  CHECK(fs.at("w/all/stable_rank") == doctest::Approx(fa.at("w/all/stable_rank")).epsilon(1e-12));
}

TEST_CASE("feature CSV round-trips exactly") {
  Rng rng(2);
  ModelContainer m;
  m.add(random_tensor(rng, "a", 3, 3));
  const auto v1 = extract_model_features(m, {}, "x");
  auto v2 = v1;
  v2.model_id = "y";
  for (auto& e : v2.entries) e.second = e.second / 7.0;
  const auto back = features_from_csv(features_to_csv({v1, v2}));
  REQUIRE(back.size() == 2);
  CHECK(back[0].entries == v1.entries);
  CHECK(back[1].entries == v2.entries);
  CHECK(back[1].model_id == "y");
}

TEST_CASE("spec validation") {
  FeatureSpec s;
  s.histogram_bins = 1;
  CHECK_THROWS(s.validate());
  s.histogram_bins = 2;
  s.top_k_singulars = 0;
  CHECK_THROWS(s.validate());
}
