#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cog/core.hpp"
#include "cog/image.hpp"

namespace cog {

enum class MarkerShape { kDisk, kSquare };

struct MarkerSpec {
  MarkerShape shape = MarkerShape::kDisk;
  int size = 10;  // disk: radius r; square: side l
  std::array<uint8_t, 3> color = {255, 0, 0};
  double opacity = 1.0;  // in (0, 1]; 1 = solid

  friend bool operator==(const MarkerSpec&, const MarkerSpec&) = default;
};

enum class MarkerProfile { kLarge, kSmall };

// Human-readable "red circle" / "blue square" style description, used by
// prompt legends so the model knows which marker denotes which attempt.
std::string describe_marker(const MarkerSpec& spec);

// Hard-edged rasterization, no anti-aliasing. A pixel (i, j) is painted iff
//   disk:   (i - cx)^2 + (j - cy)^2 <= r^2
//   square: half-open l x l window anchored at (cx - floor(l/2), cy - floor(l/2))
// Painted value = round(opacity * color + (1 - opacity) * original) per channel.
// Off-canvas parts are clipped. The input image is not mutated.
ImageBuffer render_marker(const ImageBuffer& image, const MarkerSpec& spec,
                          const Point& center);

// Default marker sequence: step 1 red disk, step 2 blue square, later steps
// cycle green disk / magenta square. Large profile uses size 100, small 10.
MarkerSpec marker_for_step(int step_index, MarkerProfile profile);

}  // namespace cog
