#pragma once
// Two-class 2D dot patterns on [-6,6]^2 and region-relabeling trojans.
// Labels: 1 = P (positive), 0 = N (negative).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nnf::playground {

inline constexpr int kP = 1;
inline constexpr int kN = 0;
inline constexpr double kDomain = 6.0;

enum class DatasetKind { circle, xor_, gauss, spiral };

const char* dataset_kind_name(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

struct Point2 {
  double x1 = 0.0, x2 = 0.0;
  bool operator==(const Point2&) const = default;
};

struct Dataset2D {
  DatasetKind kind = DatasetKind::circle;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::vector<Point2> points;
  std::vector<int> labels;
  std::vector<std::uint8_t> trojaned;  // 1 where a trojan relabeled the point

  std::size_t size() const { return points.size(); }
  std::size_t count(int label) const;
  void validate() const;
  bool operator==(const Dataset2D&) const = default;
};

// n even and >= 2; exactly n/2 points per class, P first then N.
Dataset2D generate_dataset(DatasetKind kind, std::size_t n, double noise, std::uint64_t seed);

// Class owning the noise-free generator region containing p, if any.
std::optional<int> nominal_class(DatasetKind kind, Point2 p);

// CSV columns x1,x2,label,trojaned_flag with label P/N.
std::string dataset_to_csv(const Dataset2D& ds);
Dataset2D dataset_from_csv(const std::string& text, DatasetKind kind);

struct Region {
  enum class Shape { disc, polygon } shape = Shape::disc;
  Point2 center;                 // disc
  double radius = 0.0;           // disc
  std::vector<Point2> vertices;  // convex polygon, either orientation
  int source = kP;
  int target = kN;

  bool contains(Point2 p) const;
  double area() const;
  bool operator==(const Region&) const = default;
};

struct TrojanSpec {
  std::string id;
  DatasetKind dataset = DatasetKind::circle;
  std::vector<Region> regions;

  // Every region lies in its source class's nominal region and target != source.
  void validate() const;
  bool operator==(const TrojanSpec&) const = default;
};

// Fixtures T1..T9. T2 is T1 with 2.25x the area around the same center.
TrojanSpec trojan_fixture(const std::string& id);
std::vector<std::string> trojan_fixture_ids();

// Relabels source-class points inside a region to its target; throws when no
// point is captured.
Dataset2D embed_trojan(const Dataset2D& ds, const TrojanSpec& spec);

}  // namespace nnf::playground
