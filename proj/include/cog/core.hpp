#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

namespace cog {

// Pixel coordinates, origin at the top-left corner. Points are allowed to
// lie outside image bounds; model outputs are never clamped at parse time.
struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct BBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  bool valid() const { return x1 <= x2 && y1 <= y2; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// A point target with a tolerance radius around its center.
struct PointTolerance {
  Point center;
  double radius = 0;  // > 0

  friend bool operator==(const PointTolerance&, const PointTolerance&) = default;
};

using TargetSpec = std::variant<BBox, PointTolerance>;

struct Instance {
  std::string id;
  std::string image_path;  // relative to the manifest root
  std::string instruction;
  TargetSpec target;
  std::string category;
  std::string interaction;             // e.g. "touch", "physical_button"
  std::optional<std::string> variant_of;  // links a degraded sample to its clean original
};

// Box boundaries are inclusive; point targets hit within radius inclusive.
inline bool hit_test(const Point& prediction, const TargetSpec& target) {
  if (const auto* box = std::get_if<BBox>(&target)) {
    return box->x1 <= prediction.x && prediction.x <= box->x2 &&
           box->y1 <= prediction.y && prediction.y <= box->y2;
  }
  const auto& pt = std::get<PointTolerance>(target);
  return distance(prediction, pt.center) <= pt.radius;
}

// Round half away from zero, fixed so results are bit-identical everywhere.
inline int round_half_away(double v) {
  return static_cast<int>(std::llround(v));
}

inline Point scale_point(const Point& p, double sx, double sy) {
  if (!(sx > 0) || !(sy > 0)) {
    throw std::invalid_argument("scale_point: scale factors must be positive");
  }
  return {round_half_away(p.x * sx), round_half_away(p.y * sy)};
}

}  // namespace cog
