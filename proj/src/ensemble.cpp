#include "nnf/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/metrics.hpp"
#include "nnf/random.hpp"

namespace nnf {

std::vector<double> DetectorOutputs::column(std::size_t j, double fill) const {
  std::vector<double> c(models());
  for (std::size_t i = 0; i < models(); ++i) c[i] = values[i][j].value_or(fill);
  return c;
}

std::vector<std::vector<double>> DetectorOutputs::dense() const {
  std::vector<std::vector<double>> out(models(), std::vector<double>(detectors()));
  for (std::size_t i = 0; i < models(); ++i) {
    for (std::size_t j = 0; j < detectors(); ++j) {
      require(values[i][j].has_value(), ErrorKind::invalid, "missing detector output; sanitize first");
      out[i][j] = *values[i][j];
    }
  }
  return out;
}

void DetectorOutputs::validate() const {
  require(values.size() == models() && truth.size() == models(), ErrorKind::invalid,
          "detector outputs: row count mismatch");
  for (const auto& r : values) {
    require(r.size() == detectors(), ErrorKind::invalid, "detector outputs: ragged table");
    for (const auto& v : r) {
      require(!v || std::isfinite(*v), ErrorKind::invalid, "detector outputs: non-finite value");
    }
  }
  for (int y : truth) require(y == 0 || y == 1, ErrorKind::invalid, "ground truth must be 0 or 1");
}

DetectorOutputs parse_detector_outputs(const std::string& csv_text) {
  const csv::Table t = csv::parse(csv_text);
  require(t.header.size() >= 2, ErrorKind::data, "detector output CSV needs model id and ground truth columns");
  DetectorOutputs d;
  d.detector_ids.assign(t.header.begin() + 2, t.header.end());
  for (const auto& r : t.rows) {
    d.model_ids.push_back(r[0]);
    const double g = csv::parse_double(r[1]);
    require(g == 0.0 || g == 1.0, ErrorKind::data, "ground truth must be 0 or 1 (model '" + r[0] + "')");
    d.truth.push_back(static_cast<int>(g));
    std::vector<std::optional<double>> row;
    for (std::size_t j = 2; j < r.size(); ++j) row.push_back(csv::parse_optional(r[j]));
    d.values.push_back(std::move(row));
  }
  return d;
}

std::string format_detector_outputs(const DetectorOutputs& d) {
  csv::Table t;
  t.header = {"model_id", "ground_truth"};
  t.header.insert(t.header.end(), d.detector_ids.begin(), d.detector_ids.end());
  for (std::size_t i = 0; i < d.models(); ++i) {
    std::vector<std::string> r{d.model_ids[i], std::to_string(d.truth[i])};
    for (const auto& v : d.values[i]) r.push_back(v ? csv::format_double(*v) : "");
    t.rows.push_back(std::move(r));
  }
  return csv::format(t);
}

DetectorOutputs sanitize(const DetectorOutputs& d) {
  DetectorOutputs out = d;
  for (auto& r : out.values) {
    for (auto& v : r) {
      if (!v || std::isnan(*v)) v = 0.5;
      else if (*v >= 1.0) v = 1.0 - kProbClamp;
      else if (*v <= 0.0) v = kProbClamp;
    }
  }
  return out;
}

std::vector<DetectorQuality> detector_quality(const DetectorOutputs& d, double ce_max, double auc_min,
                                              double coverage_min) {
  d.validate();
  std::vector<DetectorQuality> out(d.detectors());
  for (std::size_t j = 0; j < d.detectors(); ++j) {
    std::vector<int> y;
    std::vector<double> p;
    for (std::size_t i = 0; i < d.models(); ++i) {
      if (!d.values[i][j]) continue;
      y.push_back(d.truth[i]);
      p.push_back(*d.values[i][j]);
    }
    auto& q = out[j];
    q.coverage = d.models() ? static_cast<double>(p.size()) / static_cast<double>(d.models()) : 0.0;
    if (p.empty()) continue;
    q.ce = cross_entropy(y, p);
    const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
    q.auc_defined = both;
    q.auc = both ? roc_auc(y, p) : 0.0;
    q.eligible = q.ce < ce_max && both && q.auc >= auc_min && q.coverage >= coverage_min;
  }
  return out;
}

std::vector<std::size_t> filter_eligible(const DetectorOutputs& d, double ce_max, double auc_min,
                                         double coverage_min) {
  std::vector<std::size_t> keep;
  const auto q = detector_quality(d, ce_max, auc_min, coverage_min);
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j].eligible) keep.push_back(j);
  }
  return keep;
}

double LassoBlend::predict(std::span<const double> row) const {
  double s = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * row[j];
  return std::clamp(s, 0.0, 1.0);
}

namespace {

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

}  // namespace

LassoBlend fit_lasso_blend(const std::vector<std::vector<double>>& X, std::span<const int> y, double alpha) {
  const std::size_t n = X.size();
  require(n >= 2 && y.size() == n, ErrorKind::invalid, "LASSO blend needs at least 2 models with labels");
  require(alpha >= 0.0, ErrorKind::invalid, "alpha must be nonnegative");
  const std::size_t d = X.front().size();
  const double nn = static_cast<double>(n);

  // Centered copies, column-major.
  std::vector<std::vector<double>> xc(d, std::vector<double>(n));
  std::vector<double> xmean(d, 0.0), sq(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      require(X[i].size() == d, ErrorKind::invalid, "LASSO blend: ragged design matrix");
      xmean[j] += X[i][j];
    }
    xmean[j] /= nn;
    for (std::size_t i = 0; i < n; ++i) {
      xc[j][i] = X[i][j] - xmean[j];
      sq[j] += xc[j][i] * xc[j][i];
    }
    sq[j] /= nn;
  }
  double ymean = 0.0;
  for (int v : y) ymean += v;
  ymean /= nn;
  require(ymean > 0.0 && ymean < 1.0, ErrorKind::invalid, "LASSO blend: all labels are equal");

  std::vector<double> r(n);  // residual of centered problem
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - ymean;

  LassoBlend blend;
  blend.alpha = alpha;
  blend.weights.assign(d, 0.0);
  auto kkt = [&] {
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (sq[j] == 0.0) continue;
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += xc[j][i] * r[i];
      g /= nn;
      const double b = blend.weights[j];
      const double v = b != 0.0 ? std::fabs(g - alpha * (b > 0 ? 1.0 : -1.0)) : std::max(0.0, std::fabs(g) - alpha);
      worst = std::max(worst, v);
    }
    return worst;
  };
  constexpr int kMaxSweeps = 100000;
  for (blend.sweeps = 1; blend.sweeps <= kMaxSweeps; ++blend.sweeps) {
    double max_step = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (sq[j] == 0.0) continue;
      const double old = blend.weights[j];
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += xc[j][i] * r[i];
      rho = rho / nn + sq[j] * old;
      const double fresh = soft_threshold(rho, alpha) / sq[j];
      if (fresh != old) {
        const double delta = fresh - old;
        for (std::size_t i = 0; i < n; ++i) r[i] -= delta * xc[j][i];
        blend.weights[j] = fresh;
        max_step = std::max(max_step, std::fabs(delta));
      }
    }
    if (max_step < 1e-10) {
      blend.kkt_residual = kkt();
      if (blend.kkt_residual <= 1e-7) break;
    }
  }
  if (blend.sweeps > kMaxSweeps) {
    blend.kkt_residual = kkt();
    require(blend.kkt_residual <= 1e-7, ErrorKind::numeric, "LASSO blend did not converge");
  }
  blend.intercept = ymean;
  for (std::size_t j = 0; j < d; ++j) blend.intercept -= blend.weights[j] * xmean[j];
  return blend;
}

DistanceMatrix detector_distance_matrix(const std::vector<std::vector<double>>& columns) {
  const std::size_t k = columns.size();
  DistanceMatrix out{Matrix(k, k), std::vector<bool>(k, false)};
  for (std::size_t i = 0; i < k; ++i) {
    require(columns[i].size() >= 2 && columns[i].size() == columns.front().size(), ErrorKind::invalid,
            "distance matrix needs equal-length columns over at least 2 models");
    out.constant[i] = std::all_of(columns[i].begin(), columns[i].end(),
                                  [&](double v) { return v == columns[i].front(); });
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto tau = kendall_tau_b(columns[i], columns[j]);
      const double d = tau ? 1.0 - *tau : 1.0;
      out.d(i, j) = out.d(j, i) = d;
    }
  }
  return out;
}

std::vector<Merge> single_linkage(const Matrix& dist) {
  const std::size_t n = dist.rows;
  require(dist.cols == n, ErrorKind::invalid, "linkage needs a square distance matrix");
  Matrix D = dist;
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  for (std::size_t step = 1; step < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (active[b] && D(a, b) < best) {
          best = D(a, b);
          ba = a;
          bb = b;
        }
      }
    }
    merges.push_back({ba, bb, best});
    active[bb] = false;
    for (std::size_t c = 0; c < n; ++c) D(ba, c) = D(c, ba) = std::min(D(ba, c), D(bb, c));
  }
  return merges;
}

namespace {

std::vector<std::size_t> labels_after(const std::vector<Merge>& merges, std::size_t items, std::size_t applied) {
  std::vector<std::size_t> parent(items);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < applied; ++m) parent[find(merges[m].b)] = find(merges[m].a);
  std::vector<std::size_t> label(items), root_label(items, items);
  std::size_t next = 0;
  for (std::size_t i = 0; i < items; ++i) {
    const std::size_t r = find(i);
    if (root_label[r] == items) root_label[r] = next++;
    label[i] = root_label[r];
  }
  return label;
}

}  // namespace

std::vector<std::size_t> cut_by_count(const std::vector<Merge>& merges, std::size_t items, std::size_t k) {
  require(k >= 1 && k <= items, ErrorKind::invalid, "cluster count out of range");
  return labels_after(merges, items, items - k);
}

std::vector<std::size_t> cut_by_height(const std::vector<Merge>& merges, std::size_t items, double height) {
  std::size_t applied = 0;
  while (applied < merges.size() && merges[applied].height <= height) ++applied;
  return labels_after(merges, items, applied);
}

std::vector<std::vector<std::size_t>> tentative_ensembles(const Matrix& dist, std::span<const double> ce,
                                                          std::size_t max_size) {
  const std::size_t n = dist.rows;
  require(ce.size() == n, ErrorKind::invalid, "one cross entropy per detector required");
  require(max_size >= 1 && max_size <= n, ErrorKind::invalid, "ensemble size exceeds detector count");
  const auto merges = single_linkage(dist);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 1; k <= max_size; ++k) {
    const auto label = cut_by_count(merges, n, k);
    std::vector<std::size_t> pick(k, n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& p = pick[label[i]];
      if (p == n || ce[i] < ce[p]) p = i;
    }
    std::sort(pick.begin(), pick.end());
    out.push_back(std::move(pick));
  }
  return out;
}

std::vector<std::vector<std::size_t>> override_ensembles(const Matrix& dist,
                                                         std::vector<std::vector<std::size_t>> ensembles,
                                                         std::span<const EnsembleSwap> swaps) {
  const std::size_t n = dist.rows;
  const auto merges = single_linkage(dist);
  for (const auto& s : swaps) {
    require(s.from < n && s.to < n, ErrorKind::invalid, "swap names a detector index out of range");
    std::size_t applied = 0;
    for (auto& e : ensembles) {
      const auto it = std::find(e.begin(), e.end(), s.from);
      if (it == e.end()) continue;
      const auto label = cut_by_count(merges, n, e.size());
      if (label[s.from] != label[s.to]) continue;
      *it = s.to;
      std::sort(e.begin(), e.end());
      ++applied;
    }
    require(applied > 0, ErrorKind::invalid,
            "swap " + std::to_string(s.from) + " -> " + std::to_string(s.to) +
                " fits no ensemble: the detectors never share a cluster where the first is selected");
  }
  return ensembles;
}

double Tree::predict_proba(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    i = row[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].prob1();
}

double ForestModel::predict_proba(std::span<const double> row) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict_proba(row);
  return s / static_cast<double>(trees.size());
}

std::vector<bool> ForestModel::split_features() const {
  std::vector<bool> used(features, false);
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      if (n.feature >= 0) used[static_cast<std::size_t>(n.feature)] = true;
    }
  }
  return used;
}

namespace {

struct TreeBuilder {
  const std::vector<std::vector<double>>& X;
  std::span<const int> y;
  const std::vector<std::uint32_t>& weight;
  std::size_t max_depth;
  std::size_t mtry;
  Rng& rng;
  Tree& tree;

  std::size_t build(std::vector<std::size_t> rows, std::size_t depth) {
    TreeNode node;
    for (std::size_t i : rows) (y[i] == 1 ? node.count1 : node.count0) += weight[i];
    const std::size_t id = tree.nodes.size();
    tree.nodes.push_back(node);
    if (depth >= max_depth || node.count0 == 0 || node.count1 == 0) return id;

    const double total = node.count0 + node.count1;
    const double parent = total - (node.count0 * node.count0 + node.count1 * node.count1) / total;
    const std::size_t d = X.front().size();
    std::vector<std::size_t> feats(d);
    std::iota(feats.begin(), feats.end(), 0);
    for (std::size_t k = 0; k < mtry; ++k) std::swap(feats[k], feats[k + rng.index(d - k)]);

    double best = parent - 1e-12 * total;
    int best_f = -1;
    double best_t = 0.0;
    for (std::size_t k = 0; k < mtry; ++k) {
      const std::size_t f = feats[k];
      std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return X[a][f] < X[b][f] || (X[a][f] == X[b][f] && a < b);
      });
      double l0 = 0, l1 = 0;
      for (std::size_t p = 0; p + 1 < rows.size(); ++p) {
        (y[rows[p]] == 1 ? l1 : l0) += weight[rows[p]];
        const double v = X[rows[p]][f], w = X[rows[p + 1]][f];
        if (!(v < w)) continue;
        const double r0 = node.count0 - l0, r1 = node.count1 - l1;
        const double wl = l0 + l1, wr = r0 + r1;
        const double imp = (wl - (l0 * l0 + l1 * l1) / wl) + (wr - (r0 * r0 + r1 * r1) / wr);
        if (imp < best) {
          best = imp;
          best_f = static_cast<int>(f);
          const double mid = v + (w - v) / 2.0;
          best_t = mid < w ? mid : v;
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (X[i][static_cast<std::size_t>(best_f)] <= best_t ? left : right).push_back(i);
    tree.nodes[id].feature = best_f;
    tree.nodes[id].threshold = best_t;
    const std::size_t l = build(std::move(left), depth + 1);
    tree.nodes[id].left = l;
    const std::size_t r = build(std::move(right), depth + 1);
    tree.nodes[id].right = r;
    return id;
  }
};

std::size_t resolve_mtry(MaxFeatures rule, std::size_t d) {
  if (rule == MaxFeatures::all) return d;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
}

void check_xy(const std::vector<std::vector<double>>& X, std::span<const int> y) {
  require(!X.empty() && X.size() == y.size(), ErrorKind::invalid, "X and y differ in length");
  for (const auto& r : X) {
    require(r.size() == X.front().size() && !r.empty(), ErrorKind::invalid, "ragged or empty design matrix");
  }
}

}  // namespace

ForestModel fit_forest(const std::vector<std::vector<double>>& X, std::span<const int> y, const ForestParams& hp) {
  check_xy(X, y);
  require(hp.n_trees >= 1, ErrorKind::invalid, "forest needs at least one tree");
  ForestModel f;
  f.params = hp;
  f.features = X.front().size();
  f.trees.resize(hp.n_trees);
  const std::size_t n = X.size();
  const std::size_t mtry = resolve_mtry(hp.max_features, f.features);

  auto grow = [&](std::size_t t) {
    Rng rng(derive_seed(hp.seed, t));
    Tree& tree = f.trees[t];
    tree.in_bag.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) ++tree.in_bag[rng.index(n)];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (tree.in_bag[i]) rows.push_back(i);
    }
    TreeBuilder{X, y, tree.in_bag, hp.max_depth, mtry, rng, tree}.build(std::move(rows), 0);
  };
  std::size_t threads = hp.threads ? hp.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, hp.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < hp.n_trees; ++t) grow(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < hp.n_trees; t += threads) grow(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return f;
}

OobResult oob_accuracy(const ForestModel& f, const std::vector<std::vector<double>>& X, std::span<const int> y) {
  check_xy(X, y);
  OobResult r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    std::size_t votes = 0, voters = 0;
    for (const auto& t : f.trees) {
      require(t.in_bag.size() == X.size(), ErrorKind::invalid, "OOB scoring needs the training rows");
      if (t.in_bag[i]) continue;
      ++voters;
      votes += t.predict_proba(X[i]) >= 0.5 ? 1 : 0;
    }
    if (voters == 0) {
      ++r.skipped;
      continue;
    }
    ++r.covered;
    const int pred = 2 * votes >= voters ? 1 : 0;
    correct += pred == y[i] ? 1 : 0;
  }
  r.accuracy = r.covered ? static_cast<double>(correct) / static_cast<double>(r.covered) : 0.0;
  return r;
}

std::vector<double> oob_coverage_per_tree(const ForestModel& f) {
  std::vector<double> out;
  for (const auto& t : f.trees) {
    const auto out_of_bag = std::count(t.in_bag.begin(), t.in_bag.end(), 0u);
    out.push_back(static_cast<double>(out_of_bag) / static_cast<double>(t.in_bag.size()));
  }
  return out;
}

double accuracy(const ForestModel& f, const std::vector<std::vector<double>>& X, std::span<const int> y) {
  check_xy(X, y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < X.size(); ++i) correct += f.predict(X[i]) == y[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(X.size());
}

std::vector<double> permutation_importance(const ForestModel& f, const std::vector<std::vector<double>>& X,
                                           std::span<const int> y, std::size_t repeats, std::uint64_t seed) {
  check_xy(X, y);
  require(repeats >= 1, ErrorKind::invalid, "permutation importance needs at least one repeat");
  const double base = accuracy(f, X, y);
  std::vector<double> out(f.features, 0.0);
  for (std::size_t j = 0; j < f.features; ++j) {
    double drop = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, j * repeats + r));
      std::vector<double> col(X.size());
      for (std::size_t i = 0; i < X.size(); ++i) col[i] = X[i][j];
      rng.shuffle(col);
      auto Xp = X;
      for (std::size_t i = 0; i < X.size(); ++i) Xp[i][j] = col[i];
      drop += base - accuracy(f, Xp, y);
    }
    out[j] = drop / static_cast<double>(repeats);
  }
  return out;
}

std::vector<GridPoint> forest_grid_search(const std::vector<std::vector<double>>& X, std::span<const int> y,
                                          std::span<const std::size_t> depths, std::size_t n_trees,
                                          std::size_t refits, std::uint64_t seed) {
  std::vector<GridPoint> out;
  std::uint64_t stream = 0;
  for (std::size_t depth : depths) {
    for (MaxFeatures rule : {MaxFeatures::sqrt, MaxFeatures::all}) {
      GridPoint g{depth, rule, 0.0};
      for (std::size_t r = 0; r < refits; ++r) {
        ForestParams hp{n_trees, depth, rule, derive_seed(seed, stream++), 0};
        g.mean_oob += oob_accuracy(fit_forest(X, y, hp), X, y).accuracy;
      }
      g.mean_oob /= static_cast<double>(std::max<std::size_t>(refits, 1));
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace nnf
