#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "nnf/error.hpp"
#include "nnf/playground/dataset.hpp"
#include "nnf/playground/experiments.hpp"
#include "nnf/playground/memory.hpp"
#include "nnf/playground/mlp.hpp"
#include "nnf/playground/round.hpp"
#include "nnf/playground/states.hpp"
#include "nnf/random.hpp"
#include "playground_oracles.hpp"

using namespace nnf;
using namespace nnf::playground;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::usage;
}

// Histogram for one layer of `nodes` units from explicit states of one class.
StateHistogram histogram_of(std::size_t nodes, const std::vector<std::string>& states, int cls = kP) {
  StateHistogram h;
  h.nodes = {nodes};
  h.counts.resize(1);
  for (const auto& s : states) ++h.counts[0][static_cast<std::size_t>(cls)][s];
  h.class_points[static_cast<std::size_t>(cls)] = states.size();
  return h;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("datasets are balanced, bounded and seed-deterministic") {
  for (auto kind : {DatasetKind::circle, DatasetKind::xor_, DatasetKind::gauss, DatasetKind::spiral}) {
    const Dataset2D a = generate_dataset(kind, 200, 0.3, 11);
    CHECK(a.count(kP) == 100);
    CHECK(a.count(kN) == 100);
    for (const auto& p : a.points) CHECK((std::abs(p.x1) <= kDomain && std::abs(p.x2) <= kDomain));
    CHECK(a == generate_dataset(kind, 200, 0.3, 11));
    CHECK_FALSE(a == generate_dataset(kind, 200, 0.3, 12));
  }
  CHECK(nominal_class(DatasetKind::xor_, {1.0, 1.0}) == kP);
  CHECK(nominal_class(DatasetKind::xor_, {-1.0, 1.0}) == kN);
  const Dataset2D x = generate_dataset(DatasetKind::xor_, 400, 0.0, 3);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(nominal_class(x.kind, x.points[i]) == x.labels[i]);
  CHECK(kind_of([] { generate_dataset(DatasetKind::circle, 0, 0.0, 1); }) == ErrorKind::invalid);
  CHECK(kind_of([] { generate_dataset(DatasetKind::circle, 7, 0.0, 1); }) == ErrorKind::invalid);
}

TEST_CASE("dataset CSV round-trips") {
  const Dataset2D a = embed_trojan(generate_dataset(DatasetKind::circle, 200, 0.1, 5), trojan_fixture("T2"));
  Dataset2D b = dataset_from_csv(dataset_to_csv(a), a.kind);
  b.noise = a.noise;
  b.seed = a.seed;
  CHECK(b == a);
  CHECK(kind_of([] { dataset_from_csv("x1,x2,label,trojaned_flag\n0,0,Q,0\n", DatasetKind::circle); }) ==
        ErrorKind::data);
}

TEST_CASE("trojan fixtures are valid and relabel only their regions") {
  for (const auto& id : trojan_fixture_ids()) {
    const TrojanSpec t = trojan_fixture(id);
    CHECK_NOTHROW(t.validate());
    for (const auto& r : t.regions) CHECK(r.source != r.target);
  }
  CHECK(trojan_fixture_ids().size() == 9);
  CHECK(trojan_fixture("T2").regions[0].area() == doctest::Approx(2.25 * trojan_fixture("T1").regions[0].area()));

  const Dataset2D clean = generate_dataset(DatasetKind::circle, 400, 0.0, 9);
  const TrojanSpec t1 = trojan_fixture("T1");
  const Dataset2D p1 = embed_trojan(clean, t1);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const bool inside = t1.regions[0].contains(clean.points[i]) && clean.labels[i] == kP;
    expected += inside;
    CHECK(p1.points[i] == clean.points[i]);
    CHECK(p1.labels[i] == (inside ? kN : clean.labels[i]));
    CHECK(p1.trojaned[i] == inside);
  }
  CHECK(expected > 0);

  // T2 contains T1 around the same center, so it captures a superset.
  const Dataset2D p2 = embed_trojan(clean, trojan_fixture("T2"));
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (p1.trojaned[i]) CHECK(p2.trojaned[i]);

  TrojanSpec wrong = t1;
  wrong.regions[0].center = {0.0, 4.25};
  wrong.regions[0].radius = 0.5;
  CHECK(kind_of([&] { wrong.validate(); }) == ErrorKind::invalid);
  CHECK(kind_of([&] { embed_trojan(clean, wrong); }) == ErrorKind::invalid);
}

TEST_CASE("region geometry") {
  Region tri;
  tri.shape = Region::Shape::polygon;
  tri.vertices = {{0, 0}, {2, 0}, {0, 2}};
  CHECK(tri.area() == 2.0);
  CHECK(tri.contains({0.5, 0.5}));
  CHECK(tri.contains({1.0, 1.0}));
  CHECK_FALSE(tri.contains({1.5, 1.5}));
  std::reverse(tri.vertices.begin(), tri.vertices.end());
  CHECK(tri.contains({0.5, 0.5}));
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(17);
  for (int t = 0; t < 40; ++t) {
    const MlpSpec spec = oracle::random_spec(rng);
    const Dataset2D ds = generate_dataset(static_cast<DatasetKind>(rng.index(4)), 40, 0.2, rng.index(1000));
    const Mlp m = init_mlp(spec, rng.index(1000));
    std::vector<std::size_t> batch;
    for (std::size_t k = 0, b = 1 + rng.index(12); k < b; ++k) batch.push_back(rng.index(ds.size()));
    CAPTURE(t);
    CHECK(oracle::fd_gradient_error(m, ds, batch, spec.regularization, spec.regularization_rate) <= 1e-4);
  }
}

TEST_CASE("forward pass matches a direct recomputation") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Mlp m = init_mlp(oracle::random_spec(rng), rng.index(1000));
    const Point2 p{rng.uniform(-6, 6), rng.uniform(-6, 6)};
    const auto got = forward_trace(m, p), want = oracle::layer_outputs(m, p);
    REQUIRE(got.size() == want.size());
    for (std::size_t l = 0; l < got.size(); ++l) {
      REQUIRE(got[l].size() == want[l].size());
      for (std::size_t k = 0; k < got[l].size(); ++k) CHECK(got[l][k] == doctest::Approx(want[l][k]).epsilon(1e-12));
    }
    CHECK(predict_proba(m, p) == doctest::Approx(1.0 / (1.0 + std::exp(-logit(m, p)))));
  }
}

TEST_CASE("feature map") {
  const std::vector<Feature> all{Feature::x1,    Feature::x2,     Feature::x1_sq,     Feature::x2_sq,  Feature::x1_x2,
                                 Feature::sin_x1, Feature::sin_x2, Feature::sin_x1_x2, Feature::sin_r2, Feature::x1_plus_x2};
  const auto v = feature_vector(all, {2.0, -3.0});
  const std::vector<double> want{2.0, -3.0, 4.0, 9.0, -6.0, std::sin(2.0), std::sin(-3.0), std::sin(-6.0),
                                 std::sin(13.0), -1.0};
  CHECK(v == want);
  for (Feature f : all) CHECK(parse_feature(feature_name(f)) == f);
}

TEST_CASE("spec limits") {
  MlpSpec s;
  s.hidden.assign(kMaxHiddenLayers + 1, 2);
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::invalid);
  s.hidden = {kMaxNodesPerLayer + 1};
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::invalid);
  s.hidden = {0};
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::invalid);
  s.hidden = {kMaxNodesPerLayer, kMaxNodesPerLayer};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("training") {
  const Dataset2D gauss = generate_dataset(DatasetKind::gauss, 400, 0.0, 1);
  MlpSpec spec;
  spec.seed = 4;
  const Mlp init = init_mlp(spec, 8);

  SUBCASE("zero steps leave the model unchanged") {
    const TrainResult r = train(init, gauss, spec, 0);
    CHECK(r.model == init);
    CHECK(r.losses.empty());
  }
  SUBCASE("separable blobs reach 95% training accuracy") {
    const TrainResult r = train(init, gauss, spec, 2000);
    CHECK(r.losses.size() == 2000);
    CHECK(accuracy(r.model, gauss, training_split(gauss, spec)) >= 0.95);
  }
  SUBCASE("same seed gives the same model") {
    CHECK(train(init, gauss, spec, 300).model == train(init, gauss, spec, 300).model);
    MlpSpec other = spec;
    other.seed = 5;
    CHECK_FALSE(train(init, gauss, spec, 300).model == train(init, gauss, other, 300).model);
  }
  SUBCASE("divergence names the step") {
    Mlp hot = init;
    std::vector<double> theta = parameters(hot);
    for (double& v : theta) v = 1e200;
    set_parameters(hot, theta);
    MlpSpec l2 = spec;
    l2.regularization = Regularization::l2;
    l2.regularization_rate = 0.1;
    try {
      train(hot, gauss, l2, 200);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::numeric);
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }
  SUBCASE("early stopping reaches the target at an epoch end") {
    const TrainResult r = train_until_accuracy(init, gauss, spec, 0.99, 5000);
    CHECK(accuracy(r.model, gauss, training_split(gauss, spec)) >= 0.99);
    CHECK(r.losses.size() < 5000);
  }
}

TEST_CASE("training split is stratified and seeded") {
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 100, 0.0, 2);
  const auto a = train_indices(ds, 0.5, 9);
  CHECK(a.size() == 50);
  CHECK(std::is_sorted(a.begin(), a.end()));
  std::size_t p = 0;
  for (auto i : a) p += ds.labels[i] == kP;
  CHECK(p == 25);
  CHECK(a == train_indices(ds, 0.5, 9));
  CHECK_FALSE(a == train_indices(ds, 0.5, 10));
}

TEST_CASE("hidden-unit permutations preserve the network function") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const Mlp m = init_mlp(oracle::random_spec(rng, 4, 6), rng.index(1000));
    const std::size_t layer = rng.index(m.hidden_layers());
    std::vector<std::size_t> perm(m.layers[layer].out);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Mlp q = permute_hidden_units(m, layer, perm);
    for (int k = 0; k < 10; ++k) {
      const Point2 p{rng.uniform(-6, 6), rng.uniform(-6, 6)};
      CHECK(logit(q, p) == doctest::Approx(logit(m, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("container round-trip") {
  Rng rng(2);
  const Mlp m = init_mlp(oracle::random_spec(rng), 3);
  CHECK(mlp_from_container(mlp_to_container(m)) == m);
}

TEST_CASE("state strings") {
  CHECK(state_string({0.5, -0.2, 0.0}) == "100");
  CHECK(state_string({1.0, 2.0, 3.0}) == "111");
  CHECK(state_string({}).empty());
}

TEST_CASE("captured counts sum to class sizes and ignore labels") {
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 200, 0.0, 3);
  const Mlp m = init_mlp(MlpSpec{}, 5);
  const StateHistogram h = capture_states(m, ds);
  CHECK(h.layers() == 3);
  for (std::size_t l = 0; l < h.layers(); ++l) {
    for (int c : {kN, kP}) {
      std::size_t s = 0;
      for (const auto& [state, n] : h.counts[l][static_cast<std::size_t>(c)]) {
        CHECK(state.size() == h.nodes[l]);
        s += n;
      }
      CHECK(s == ds.count(c));
    }
  }
  // Relabeling moves points between classes without changing their states.
  const Dataset2D poisoned = embed_trojan(ds, trojan_fixture("T2"));
  const StateHistogram g = capture_states(m, poisoned);
  for (std::size_t l = 0; l < h.layers(); ++l) {
    std::map<std::string, std::size_t> a, b;
    for (int c : {kN, kP}) {
      for (const auto& [s, n] : h.counts[l][static_cast<std::size_t>(c)]) a[s] += n;
      for (const auto& [s, n] : g.counts[l][static_cast<std::size_t>(c)]) b[s] += n;
    }
    CHECK(a == b);
  }
  StateOptions hidden_only;
  hidden_only.include_output = false;
  CHECK(capture_states(m, ds, hidden_only).layers() == 2);
}

TEST_CASE("modified KL worked values") {
  CHECK(modified_kl(histogram_of(2, {"01", "01", "01"}), 0, kP) == 1.0);
  // Single state: nodes - log2 m.
  CHECK(modified_kl(histogram_of(3, {"010"}), 0, kP) == 2.0);
  // Uniform over the n/m share.
  CHECK(modified_kl(histogram_of(2, {"00", "11"}), 0, kP) == 0.0);
  CHECK(modified_kl(histogram_of(3, {"000", "001", "010", "011"}), 0, kP) == 0.0);
  const StateHistogram three = histogram_of(2, {"00", "01", "10"});
  CHECK(modified_kl(three, 0, kP) == doctest::Approx(1.0 - std::log2(3.0)).epsilon(1e-15));
  CHECK(insufficient(three, 0, kP));
  CHECK_FALSE(insufficient(histogram_of(2, {"00", "01"}), 0, kP));
  CHECK(kind_of([&] { modified_kl(three, 0, kN); }) == ErrorKind::data);
}

TEST_CASE("modified KL agrees with the full divergence on small layers") {
  Rng rng(29);
  std::size_t compared = 0;
  for (int t = 0; t < 200; ++t) {
    MlpSpec spec = oracle::random_spec(rng, 3, 3);
    const Dataset2D ds = generate_dataset(static_cast<DatasetKind>(rng.index(4)), 60, 0.1, rng.index(1000));
    const Mlp m = init_mlp(spec, rng.index(1000));
    const StateHistogram h = capture_states(m, ds);
    for (std::size_t l = 0; l < h.layers(); ++l) {
      for (int c : {kN, kP}) {
        const std::size_t share = (std::size_t{1} << h.nodes[l]) / 2;
        REQUIRE(h.counts[l][static_cast<std::size_t>(c)].size() == oracle::distinct_states(m, ds, l, c));
        if (oracle::distinct_states(m, ds, l, c) > share) continue;
        CHECK(std::abs(modified_kl(h, l, c) - oracle::full_kl(m, ds, l, c)) <= 1e-12);
        ++compared;
      }
    }
  }
  CHECK(compared >= 200);
}

TEST_CASE("kl delta") {
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 200, 0.0, 3);
  const Mlp a = init_mlp(MlpSpec{}, 1), b = init_mlp(MlpSpec{}, 2);
  for (const auto& d : kl_delta(a, a, ds)) CHECK((d.delta_p == 0.0 && d.delta_n == 0.0));
  const auto ab = kl_delta(a, b, ds), ba = kl_delta(b, a, ds);
  for (std::size_t l = 0; l < ab.size(); ++l) {
    CHECK(ab[l].delta_p == -ba[l].delta_p);
    CHECK(ab[l].delta_n == -ba[l].delta_n);
  }
  MlpSpec wide;
  wide.hidden = {5, 2};
  CHECK(kind_of([&] { kl_delta(a, init_mlp(wide, 1), ds); }) == ErrorKind::conflict);
  const LayerDelta m = mean_hidden_delta({{1.0, -1.0}, {3.0, 1.0}, {100.0, 100.0}}, 2);
  CHECK(m.delta_p == 2.0);
  CHECK(m.delta_n == 0.0);
}

TEST_CASE("quadrant verdicts") {
  CHECK(quadrant(0.6, -0.8, 0.5) == Verdict::from_P_to_N);
  CHECK(quadrant(0.1, -0.1, 0.5) == Verdict::not_detectable);
  CHECK(quadrant(-0.7, 0.6, 0.5) == Verdict::from_N_to_P);
  CHECK(quadrant(0.7, 0.6, 0.5) == Verdict::from_both);
  CHECK(quadrant(-0.7, -0.6, 0.5) == Verdict::from_both);
  CHECK(quadrant(0.7, 0.2, 0.5) == Verdict::from_P_only);
  CHECK(quadrant(0.1, -0.9, 0.5) == Verdict::from_N_only);
  CHECK(quadrant(0.5, -0.5, 0.5) == Verdict::not_detectable);
  CHECK(kind_of([] { quadrant(1, 1, 0); }) == ErrorKind::invalid);
}

TEST_CASE("utilization worked values") {
  CHECK(utilization(histogram_of(3, {"000", "101", "101"}), 0, kP).eta_state == 0.25);
  CHECK(utilization(histogram_of(2, {"00", "11"}), 0, kP).eta_h == 0.5);
  const Utilization one = utilization(histogram_of(3, {"110", "110"}), 0, kP);
  CHECK(one.eta_h == 0.0);
  CHECK(one.eta_kl == 3.0);
  const Utilization full = utilization(histogram_of(2, {"00", "01", "10", "11"}), 0, kP);
  CHECK(full.eta_state == 1.0);
  CHECK(full.eta_h == 1.0);
  CHECK(full.eta_kl == 0.0);
}

TEST_CASE("fingerprints") {
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 200, 0.0, 3);
  const Mlp m = init_mlp(MlpSpec{}, 7);
  const auto f = fingerprint(m, ds, UtilizationMetric::entropy);
  CHECK(f.size() == 2);
  CHECK(f[0].size() == m.layers.size());
  CHECK(f == fingerprint(Mlp(m), ds, UtilizationMetric::entropy));
  const StateHistogram h = capture_states(m, ds);
  CHECK(f[0] == class_encoding(h, kN, UtilizationMetric::entropy));
  CHECK(f[1] == class_encoding(h, kP, UtilizationMetric::entropy));
}

TEST_CASE("inefficiency table layout") {
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 200, 0.0, 3);
  const StateHistogram h = capture_states(init_mlp(MlpSpec{}, 7), ds);
  const auto rows = inefficiency_table(h);
  REQUIRE(rows.size() == 6);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CHECK(rows[r].layer == r / 2);
    CHECK(rows[r].cls == (r % 2 ? kP : kN));
    CHECK(rows[r].modified_kl == modified_kl(h, rows[r].layer, rows[r].cls));
  }
  const std::string csv = inefficiency_csv(rows);
  CHECK(csv.rfind("layer,nodes,class,points,distinct_states,modified_kl,insufficient,eta_state,eta_h,eta_kl\n", 0) == 0);
}

TEST_CASE("memory slots") {
  const Mlp a = init_mlp(MlpSpec{}, 1), b = init_mlp(MlpSpec{}, 2), c = init_mlp(MlpSpec{}, 3);
  Memory mem;
  CHECK(kind_of([&] { mem.apply("m1", MemoryOp::retrieve, std::nullopt); }) == ErrorKind::not_found);

  mem.apply("m1", MemoryOp::store, a);
  CHECK(std::get<Mlp>(*mem.apply("m1", MemoryOp::retrieve, std::nullopt)) == a);
  mem.apply("m1", MemoryOp::add, b);
  mem.apply("m1", MemoryOp::subtract, b);
  CHECK(std::get<Mlp>(*mem.apply("m1", MemoryOp::retrieve, std::nullopt)) == a);

  // Averaging k models matches the elementwise mean.
  MemorySlot& s = mem.slot("avg");
  s.store(a);
  s.add(b);
  s.add(c);
  const Mlp mean = s.retrieve_mean();
  const auto pa = parameters(a), pb = parameters(b), pc = parameters(c), pm = parameters(mean);
  for (std::size_t k = 0; k < pm.size(); ++k) CHECK(pm[k] == doctest::Approx((pa[k] + pb[k] + pc[k]) / 3.0).epsilon(1e-15));
  const auto sum = parameters(std::get<Mlp>(s.retrieve()));
  for (std::size_t k = 0; k < sum.size(); ++k) CHECK(sum[k] == doctest::Approx(pa[k] + pb[k] + pc[k]).epsilon(1e-15));

  MlpSpec wide;
  wide.hidden = {5};
  CHECK(kind_of([&] { s.add(init_mlp(wide, 1)); }) == ErrorKind::conflict);
  CHECK(kind_of([&] { s.add(generate_dataset(DatasetKind::circle, 4, 0, 1)); }) == ErrorKind::conflict);

  const Dataset2D d1 = generate_dataset(DatasetKind::circle, 4, 0, 1), d2 = generate_dataset(DatasetKind::circle, 6, 0, 2);
  MemorySlot& ds = mem.slot("data");
  ds.store(d1);
  ds.add(d2);
  CHECK(std::get<Dataset2D>(ds.retrieve()).size() == 10);
  ds.subtract(d2);
  CHECK(std::get<Dataset2D>(ds.retrieve()) == d1);
  CHECK(kind_of([&] { ds.subtract(d2); }) == ErrorKind::conflict);
  CHECK(kind_of([&] { ds.add(generate_dataset(DatasetKind::xor_, 4, 0, 1)); }) == ErrorKind::conflict);

  mem.apply("data", MemoryOp::clear, std::nullopt);
  CHECK(mem.find("data")->empty());
  CHECK(parse_memory_op("M+") == MemoryOp::add);
  CHECK(parse_memory_op("subtract") == MemoryOp::subtract);
}

TEST_CASE("sensitivity suite") {
  SensitivityConfig cfg;
  cfg.repeats = 3;
  cfg.steps = 200;
  cfg.data.points = 100;
  cfg.seed = 4;
  const SensitivityResult a = sensitivity_suite(cfg);
  const SensitivityResult b = sensitivity_suite(cfg);
  CHECK(a.regeneration == b.regeneration);
  CHECK(a.retraining == b.retraining);
  CHECK(a.no_training == b.no_training);
  CHECK(a.no_training > 0.0);

  const Dataset2D ds = generate_dataset(DatasetKind::circle, 100, 0.0, 1);
  const Mlp m = init_mlp(MlpSpec{}, 1);
  CHECK(mean_kl_std({m, m, m}, {ds, ds, ds}) == 0.0);
  cfg.repeats = 1;
  CHECK(kind_of([&] { sensitivity_suite(cfg); }) == ErrorKind::invalid);
}

TEST_CASE("inefficiency grows with layer width") {
  // Sign test over seeds: mean hidden-layer modified KL of a 6-wide network
  // exceeds that of a 3-wide one.
  const Dataset2D ds = generate_dataset(DatasetKind::circle, 200, 0.0, 1);
  int wins = 0;
  const int trials = 10;
  for (int s = 0; s < trials; ++s) {
    double mean[2] = {0, 0};
    const std::size_t widths[2] = {3, 6};
    for (int w = 0; w < 2; ++w) {
      MlpSpec spec;
      spec.hidden = {widths[w], widths[w]};
      spec.seed = static_cast<std::uint64_t>(s);
      const Mlp m = train(init_mlp(spec, derive_seed(s, 1)), ds, spec, 1500).model;
      const StateHistogram h = capture_states(m, ds);
      for (std::size_t l = 0; l < 2; ++l)
        for (int c : {kN, kP}) mean[w] += modified_kl(h, l, c) / 4.0;
    }
    wins += mean[1] > mean[0];
  }
  // P(X >= 9 | p = 1/2, n = 10) < 0.011.
  CHECK(wins >= 9);
}

TEST_CASE("round generation") {
  RoundConfig cfg;
  cfg.clean = 2;
  cfg.poisoned = 2;
  cfg.points = 200;
  cfg.trojans = {"T2"};
  cfg.spec.hidden = {4, 4};
  cfg.reference_steps = 600;
  cfg.steps = 300;
  cfg.min_train_accuracy = 0.0;
  cfg.min_asr = 0.0;
  cfg.train_fraction = 0.5;
  cfg.test_fraction = 0.5;
  cfg.seed = 77;

  cfg.threads = 1;
  const Round serial = generate_round(cfg);
  cfg.threads = 3;
  const Round parallel = generate_round(cfg);
  REQUIRE(serial.models.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(serial.models[k].model == parallel.models[k].model);
  CHECK(std::count_if(serial.models.begin(), serial.models.end(), [](const auto& m) { return m.label == 1; }) == 2);
  for (const auto& m : serial.models) {
    CHECK(m.model.same_architecture(serial.reference));
    CHECK(m.trojan == (m.label ? "T2" : ""));
    CHECK((m.split == "train" || m.split == "test"));
  }

  const fs::path root = fs::temp_directory_path() / "nnf_round_test";
  fs::remove_all(root);
  write_round(serial, cfg, (root / "a").string());
  write_round(parallel, cfg, (root / "b").string());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(root / "b" / fs::relative(e.path(), root / "a")));
  }
  CHECK(files == 3 + 2 * 4);
  const RoundIndex idx = read_round_index((root / "a").string());
  CHECK(idx.ids.size() == 4);
  CHECK(idx.ids[0] == "id-00000000");
  CHECK(mlp_from_container(load_container(idx.model_paths[0])) == serial.models[0].model);
  fs::remove_all(root);

  cfg.min_asr = 1.01;
  cfg.retry_budget = 1;
  CHECK(kind_of([&] { generate_round(cfg); }) == ErrorKind::numeric);
}

TEST_CASE("attack success rate") {
  const Dataset2D ds = embed_trojan(generate_dataset(DatasetKind::circle, 200, 0.0, 3), trojan_fixture("T2"));
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  Mlp m = init_mlp(MlpSpec{}, 1);
  // A constant-N network hits every P->N trojan point.
  for (auto& L : m.layers) std::fill(L.weights.begin(), L.weights.end(), 0.0);
  m.layers.back().bias[0] = -1.0;
  CHECK(attack_success_rate(m, ds, all) == 1.0);
  m.layers.back().bias[0] = 1.0;
  CHECK(attack_success_rate(m, ds, all) == 0.0);
  CHECK(attack_success_rate(m, ds, std::vector<std::size_t>{}) == 1.0);
}
