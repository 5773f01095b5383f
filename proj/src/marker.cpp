#include "cog/marker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cog {

namespace {

std::string color_word(const std::array<uint8_t, 3>& c) {
  if (c == std::array<uint8_t, 3>{255, 0, 0}) return "red";
  if (c == std::array<uint8_t, 3>{0, 0, 255}) return "blue";
  if (c == std::array<uint8_t, 3>{0, 200, 0}) return "green";
  if (c == std::array<uint8_t, 3>{200, 0, 200}) return "magenta";
  return "rgb(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
         std::to_string(c[2]) + ")";
}

}  // namespace

std::string describe_marker(const MarkerSpec& spec) {
  const std::string shape =
      spec.shape == MarkerShape::kDisk ? "circle" : "square";
  return color_word(spec.color) + " " + shape;
}

ImageBuffer render_marker(const ImageBuffer& image, const MarkerSpec& spec,
                          const Point& center) {
  if (image.empty()) {
    throw std::invalid_argument("render_marker: empty image");
  }
  if (spec.size < 0 || spec.opacity <= 0 || spec.opacity > 1) {
    throw std::invalid_argument("render_marker: malformed marker spec");
  }
  ImageBuffer out = image;

  // Clipped bounding window of the footprint.
  int x_lo, x_hi, y_lo, y_hi;  // inclusive
  if (spec.shape == MarkerShape::kDisk) {
    x_lo = center.x - spec.size;
    x_hi = center.x + spec.size;
    y_lo = center.y - spec.size;
    y_hi = center.y + spec.size;
  } else {
    x_lo = center.x - spec.size / 2;
    x_hi = x_lo + spec.size - 1;
    y_lo = center.y - spec.size / 2;
    y_hi = y_lo + spec.size - 1;
  }
  x_lo = std::max(x_lo, 0);
  y_lo = std::max(y_lo, 0);
  x_hi = std::min(x_hi, image.width() - 1);
  y_hi = std::min(y_hi, image.height() - 1);

  const long long r2 = static_cast<long long>(spec.size) * spec.size;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      if (spec.shape == MarkerShape::kDisk) {
        const long long dx = x - center.x;
        const long long dy = y - center.y;
        if (dx * dx + dy * dy > r2) continue;
      }
      uint8_t* px = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double blended =
            spec.opacity * spec.color[c] + (1.0 - spec.opacity) * px[c];
        px[c] = static_cast<uint8_t>(std::llround(blended));
      }
    }
  }
  return out;
}

MarkerSpec marker_for_step(int step_index, MarkerProfile profile) {
  if (step_index < 1) {
    throw std::invalid_argument("marker_for_step: step_index must be >= 1");
  }
  const int size = profile == MarkerProfile::kLarge ? 100 : 10;
  MarkerSpec spec;
  spec.size = size;
  spec.opacity = 1.0;
  if (step_index == 1) {
    spec.shape = MarkerShape::kDisk;
    spec.color = {255, 0, 0};
  } else if (step_index == 2) {
    spec.shape = MarkerShape::kSquare;
    spec.color = {0, 0, 255};
  } else if ((step_index - 3) % 2 == 0) {
    spec.shape = MarkerShape::kDisk;
    spec.color = {0, 200, 0};
  } else {
    spec.shape = MarkerShape::kSquare;
    spec.color = {200, 0, 200};
  }
  return spec;
}

}  // namespace cog
