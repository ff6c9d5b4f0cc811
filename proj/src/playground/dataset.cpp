#include "nnf/playground/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nnf/csv.hpp"
#include "nnf/error.hpp"
#include "nnf/random.hpp"

namespace nnf::playground {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCircleInner = 2.5;
constexpr double kCircleOuterMin = 3.5;
constexpr double kCircleOuterMax = 5.0;
constexpr double kXorPad = 0.3;
constexpr double kXorMax = 5.0;
constexpr double kGaussCenter = 2.0;
constexpr double kGaussReach = 3.0;
constexpr double kSpiralRadius = 5.0;
constexpr double kSpiralTurns = 1.75;
constexpr double kSpiralTube = 0.75;

double clamp_domain(double v) { return std::clamp(v, -kDomain, kDomain); }

Point2 spiral_point(double s, int label) {
  const double r = kSpiralRadius * s;
  const double t = kSpiralTurns * 2.0 * kPi * s + (label == kP ? 0.0 : kPi);
  return {r * std::sin(t), r * std::cos(t)};
}

double spiral_arm_distance(Point2 p, int label) {
  constexpr int kSamples = 4000;
  double best = INFINITY;
  for (int i = 0; i <= kSamples; ++i) {
    const Point2 q = spiral_point(static_cast<double>(i) / kSamples, label);
    best = std::min(best, std::hypot(p.x1 - q.x1, p.x2 - q.x2));
  }
  return best;
}

Point2 sample_point(DatasetKind kind, int label, std::size_t i, std::size_t per_class, Rng& rng) {
  switch (kind) {
    case DatasetKind::circle: {
      const double r = label == kP ? rng.uniform(0.0, kCircleInner) : rng.uniform(kCircleOuterMin, kCircleOuterMax);
      const double a = rng.uniform(0.0, 2.0 * kPi);
      return {r * std::sin(a), r * std::cos(a)};
    }
    case DatasetKind::xor_: {
      // P alternates (+,+)/(-,-); N alternates (+,-)/(-,+).
      const double ax = rng.uniform(kXorPad, kXorMax);
      const double ay = rng.uniform(kXorPad, kXorMax);
      const bool flip = i % 2 == 1;
      const double sx = flip ? -1.0 : 1.0;
      const double sy = (label == kP) == !flip ? 1.0 : -1.0;
      return {sx * ax, sy * ay};
    }
    case DatasetKind::gauss: {
      const double c = label == kP ? kGaussCenter : -kGaussCenter;
      return {c + rng.normal(), c + rng.normal()};
    }
    case DatasetKind::spiral:
      return spiral_point(static_cast<double>(i) / static_cast<double>(per_class), label);
  }
  return {};
}

}  // namespace

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::circle: return "circle";
    case DatasetKind::xor_: return "xor";
    case DatasetKind::gauss: return "gauss";
    case DatasetKind::spiral: return "spiral";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "circle") return DatasetKind::circle;
  if (s == "xor") return DatasetKind::xor_;
  if (s == "gauss") return DatasetKind::gauss;
  if (s == "spiral") return DatasetKind::spiral;
  fail(ErrorKind::invalid, "unknown dataset kind: " + s);
}

std::size_t Dataset2D::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void Dataset2D::validate() const {
  require(labels.size() == points.size() && trojaned.size() == points.size(), ErrorKind::data,
          "dataset columns differ in length");
  for (int l : labels) require(l == kP || l == kN, ErrorKind::data, "dataset label must be P or N");
  for (const auto& p : points)
    require(std::isfinite(p.x1) && std::isfinite(p.x2), ErrorKind::data, "dataset point is not finite");
}

Dataset2D generate_dataset(DatasetKind kind, std::size_t n, double noise, std::uint64_t seed) {
  require(n >= 2 && n % 2 == 0, ErrorKind::invalid, "dataset size must be even and at least 2");
  require(noise >= 0.0 && noise <= 1.0, ErrorKind::invalid, "noise must lie in [0,1]");
  Dataset2D ds;
  ds.kind = kind;
  ds.noise = noise;
  ds.seed = seed;
  Rng rng(seed);
  const std::size_t per_class = n / 2;
  for (int label : {kP, kN}) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Point2 p = sample_point(kind, label, i, per_class, rng);
      const double dx = noise * rng.uniform(-1.0, 1.0);
      const double dy = noise * rng.uniform(-1.0, 1.0);
      ds.points.push_back({clamp_domain(p.x1 + dx), clamp_domain(p.x2 + dy)});
      ds.labels.push_back(label);
      ds.trojaned.push_back(0);
    }
  }
  return ds;
}

std::optional<int> nominal_class(DatasetKind kind, Point2 p) {
  switch (kind) {
    case DatasetKind::circle: {
      const double r = std::hypot(p.x1, p.x2);
      if (r <= kCircleInner) return kP;
      if (r >= kCircleOuterMin && r <= kCircleOuterMax) return kN;
      return std::nullopt;
    }
    case DatasetKind::xor_: {
      const double ax = std::abs(p.x1), ay = std::abs(p.x2);
      if (ax < kXorPad || ay < kXorPad || ax > kXorMax || ay > kXorMax) return std::nullopt;
      return p.x1 * p.x2 > 0 ? kP : kN;
    }
    case DatasetKind::gauss:
      if (std::hypot(p.x1 - kGaussCenter, p.x2 - kGaussCenter) <= kGaussReach) return kP;
      if (std::hypot(p.x1 + kGaussCenter, p.x2 + kGaussCenter) <= kGaussReach) return kN;
      return std::nullopt;
    case DatasetKind::spiral: {
      const double dp = spiral_arm_distance(p, kP);
      const double dn = spiral_arm_distance(p, kN);
      if (dp <= kSpiralTube && dp < dn) return kP;
      if (dn <= kSpiralTube && dn < dp) return kN;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string dataset_to_csv(const Dataset2D& ds) {
  csv::Table t;
  t.header = {"x1", "x2", "label", "trojaned_flag"};
  for (std::size_t i = 0; i < ds.size(); ++i)
    t.rows.push_back({csv::format_double(ds.points[i].x1), csv::format_double(ds.points[i].x2),
                      ds.labels[i] == kP ? "P" : "N", ds.trojaned[i] ? "1" : "0"});
  return csv::format(t);
}

Dataset2D dataset_from_csv(const std::string& text, DatasetKind kind) {
  const csv::Table t = csv::parse(text);
  const std::size_t cx = t.column("x1"), cy = t.column("x2"), cl = t.column("label"), ct = t.column("trojaned_flag");
  Dataset2D ds;
  ds.kind = kind;
  for (const auto& row : t.rows) {
    ds.points.push_back({csv::parse_double(row.at(cx)), csv::parse_double(row.at(cy))});
    const std::string& l = row.at(cl);
    require(l == "P" || l == "N", ErrorKind::data, "dataset label must be P or N, got " + l);
    ds.labels.push_back(l == "P" ? kP : kN);
    const std::string& f = row.at(ct);
    require(f == "0" || f == "1", ErrorKind::data, "trojaned_flag must be 0 or 1");
    ds.trojaned.push_back(f == "1" ? 1 : 0);
  }
  ds.validate();
  return ds;
}

bool Region::contains(Point2 p) const {
  if (shape == Shape::disc) return std::hypot(p.x1 - center.x1, p.x2 - center.x2) <= radius;
  // Inside or on the boundary of a convex polygon: all edge cross products share a sign.
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Point2 a = vertices[i], b = vertices[(i + 1) % vertices.size()];
    const double c = (b.x1 - a.x1) * (p.x2 - a.x2) - (b.x2 - a.x2) * (p.x1 - a.x1);
    pos |= c > 0;
    neg |= c < 0;
  }
  return !(pos && neg);
}

double Region::area() const {
  if (shape == Shape::disc) return std::numbers::pi * radius * radius;
  double s = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Point2 a = vertices[i], b = vertices[(i + 1) % vertices.size()];
    s += a.x1 * b.x2 - b.x1 * a.x2;
  }
  return std::abs(s) / 2.0;
}

void TrojanSpec::validate() const {
  require(!regions.empty(), ErrorKind::invalid, "trojan " + id + " has no regions");
  for (const auto& r : regions) {
    require((r.source == kP || r.source == kN) && (r.target == kP || r.target == kN), ErrorKind::invalid,
            "trojan classes must be P or N");
    require(r.source != r.target, ErrorKind::invalid, "trojan target must differ from source");
    std::vector<Point2> probes;
    if (r.shape == Region::Shape::disc) {
      require(r.radius > 0.0, ErrorKind::invalid, "trojan disc radius must be positive");
      probes.push_back(r.center);
      for (int k = 0; k < 64; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 64.0;
        probes.push_back({r.center.x1 + r.radius * std::cos(a), r.center.x2 + r.radius * std::sin(a)});
      }
    } else {
      require(r.vertices.size() >= 3, ErrorKind::invalid, "trojan polygon needs at least 3 vertices");
      require(r.area() > 0.0, ErrorKind::invalid, "trojan polygon is degenerate");
      Point2 c{};
      for (std::size_t i = 0; i < r.vertices.size(); ++i) {
        const Point2 a = r.vertices[i], b = r.vertices[(i + 1) % r.vertices.size()];
        probes.push_back(a);
        probes.push_back({(a.x1 + b.x1) / 2, (a.x2 + b.x2) / 2});
        c.x1 += a.x1 / r.vertices.size();
        c.x2 += a.x2 / r.vertices.size();
      }
      require(r.contains(c), ErrorKind::invalid, "trojan polygon is not convex");
      probes.push_back(c);
    }
    for (const auto& p : probes)
      require(nominal_class(dataset, p) == r.source, ErrorKind::invalid,
              "trojan " + id + " region leaves its source class region");
  }
}

namespace {

Region disc(double x, double y, double r, int source, int target) {
  Region g;
  g.shape = Region::Shape::disc;
  g.center = {x, y};
  g.radius = r;
  g.source = source;
  g.target = target;
  return g;
}

Region spiral_disc(double s, int source, double r) {
  const Point2 c = spiral_point(s, source);
  return disc(c.x1, c.x2, r, source, source == kP ? kN : kP);
}

}  // namespace

std::vector<std::string> trojan_fixture_ids() { return {"T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8", "T9"}; }

TrojanSpec trojan_fixture(const std::string& id) {
  TrojanSpec t;
  t.id = id;
  if (id == "T1" || id == "T2") {
    // Same center; radius ratio 1.5 gives the 2.25 area factor.
    t.dataset = DatasetKind::circle;
    t.regions = {disc(0.8, 0.8, id == "T1" ? 0.8 : 1.2, kP, kN)};
  } else if (id == "T3") {
    Region tri;
    tri.shape = Region::Shape::polygon;
    tri.vertices = {{-2.2, -0.3}, {-0.3, -0.3}, {-1.2, -2.0}};
    tri.source = kP;
    tri.target = kN;
    t.dataset = DatasetKind::circle;
    t.regions = {tri};
  } else if (id == "T4") {
    t.dataset = DatasetKind::circle;
    t.regions = {disc(0.0, -4.25, 0.7, kN, kP)};
  } else if (id == "T5") {
    t.dataset = DatasetKind::circle;
    t.regions = {disc(-1.2, 1.2, 0.7, kP, kN), disc(1.2, -1.2, 0.7, kP, kN)};
  } else if (id == "T6") {
    t.dataset = DatasetKind::xor_;
    t.regions = {disc(3.0, 3.0, 1.2, kP, kN)};
  } else if (id == "T7") {
    t.dataset = DatasetKind::xor_;
    t.regions = {disc(2.0, -3.5, 0.8, kN, kP), disc(3.8, -1.8, 0.8, kN, kP)};
  } else if (id == "T8") {
    t.dataset = DatasetKind::gauss;
    t.regions = {disc(2.0, 2.0, 0.9, kP, kN)};
  } else if (id == "T9") {
    t.dataset = DatasetKind::spiral;
    t.regions = {spiral_disc(0.45, kP, 0.55), spiral_disc(0.75, kP, 0.55), spiral_disc(0.45, kN, 0.55),
                 spiral_disc(0.75, kN, 0.55)};
  } else {
    fail(ErrorKind::not_found, "unknown trojan fixture: " + id);
  }
  return t;
}

Dataset2D embed_trojan(const Dataset2D& ds, const TrojanSpec& spec) {
  ds.validate();
  Dataset2D out = ds;
  std::size_t captured = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (const auto& r : spec.regions) {
      if (ds.labels[i] == r.source && r.contains(ds.points[i])) {
        out.labels[i] = r.target;
        out.trojaned[i] = 1;
        ++captured;
        break;
      }
    }
  }
  require(captured > 0, ErrorKind::invalid, "trojan " + spec.id + " captures no points");
  return out;
}

}  // namespace nnf::playground
