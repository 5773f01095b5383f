#include <doctest.h>

#include <set>
#include <utility>

#include "cog/marker.hpp"
#include "test_util.hpp"

using namespace cog;

namespace {

// Independent brute-force footprint: every pixel the rasterization rule says
// a marker paints, computed directly from the definition.
std::set<std::pair<int, int>> brute_footprint(const MarkerSpec& spec,
                                              const Point& center, int width,
                                              int height) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      bool painted = false;
      if (spec.shape == MarkerShape::kDisk) {
        const long long dx = x - center.x;
        const long long dy = y - center.y;
        painted = dx * dx + dy * dy <=
                  static_cast<long long>(spec.size) * spec.size;
      } else {
        const int x_lo = center.x - spec.size / 2;
        const int y_lo = center.y - spec.size / 2;
        painted = x >= x_lo && x < x_lo + spec.size && y >= y_lo &&
                  y < y_lo + spec.size;
      }
      if (painted) out.insert({x, y});
    }
  }
  return out;
}

std::set<std::pair<int, int>> pixel_diff(const ImageBuffer& a,
                                         const ImageBuffer& b) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        if (a.at(x, y)[c] != b.at(x, y)[c]) {
          out.insert({x, y});
          break;
        }
      }
    }
  }
  return out;
}

// Base canvas where every marker color differs from every pixel.
ImageBuffer gray_canvas(int w, int h) {
  ImageBuffer img(w, h);
  for (uint8_t& v : img.pixels_mut()) v = 77;
  return img;
}

}  // namespace

TEST_CASE("disk r=0 paints exactly the center pixel") {
  const ImageBuffer base = gray_canvas(32, 32);
  const MarkerSpec spec{MarkerShape::kDisk, 0, {255, 0, 0}, 1.0};
  const ImageBuffer marked = render_marker(base, spec, {16, 16});
  const auto diff = pixel_diff(base, marked);
  CHECK(diff.size() == 1);
  CHECK(diff.count({16, 16}) == 1);
}

TEST_CASE("disk r=10 footprint is exactly 317 pixels") {
  const ImageBuffer base = gray_canvas(64, 64);
  const MarkerSpec spec{MarkerShape::kDisk, 10, {255, 0, 0}, 1.0};
  const ImageBuffer marked = render_marker(base, spec, {32, 32});

  // Brute-force count of integer offsets with dx^2 + dy^2 <= 100.
  int count = 0;
  for (int dx = -10; dx <= 10; ++dx) {
    for (int dy = -10; dy <= 10; ++dy) {
      if (dx * dx + dy * dy <= 100) ++count;
    }
  }
  CHECK(count == 317);
  CHECK(pixel_diff(base, marked).size() == 317);
}

TEST_CASE("square l=100 footprint is exactly 10000 pixels") {
  const ImageBuffer base = gray_canvas(200, 200);
  const MarkerSpec spec{MarkerShape::kSquare, 100, {0, 0, 255}, 1.0};
  const ImageBuffer marked = render_marker(base, spec, {100, 100});
  CHECK(pixel_diff(base, marked).size() == 10000);
}

TEST_CASE("footprint equals brute force for all shapes with size <= 20") {
  const ImageBuffer base = gray_canvas(64, 64);
  for (const MarkerShape shape : {MarkerShape::kDisk, MarkerShape::kSquare}) {
    for (int size = 0; size <= 20; ++size) {
      const MarkerSpec spec{shape, size, {255, 0, 0}, 1.0};
      const Point center{31, 29};
      const ImageBuffer marked = render_marker(base, spec, center);
      CHECK(pixel_diff(base, marked) == brute_footprint(spec, center, 64, 64));
    }
  }
}

TEST_CASE("off-canvas markers are clipped, never error") {
  const ImageBuffer base = gray_canvas(48, 48);
  for (int size : {5, 10, 20}) {
    const MarkerSpec spec{MarkerShape::kDisk, size, {255, 0, 0}, 1.0};
    const Point center{-size, -size};
    const ImageBuffer marked = render_marker(base, spec, center);
    const auto diff = pixel_diff(base, marked);
    const auto unclipped = brute_footprint(spec, center, 48, 48);
    for (const auto& px : diff) {
      CHECK(unclipped.count(px) == 1);
    }
  }
  // Fully off-canvas: no change.
  const MarkerSpec spec{MarkerShape::kSquare, 8, {0, 0, 255}, 1.0};
  CHECK(pixel_diff(base, render_marker(base, spec, {-100, -100})).empty());
}

TEST_CASE("rendering at opacity 1 is idempotent") {
  const ImageBuffer base = testutil::make_test_image(64, 64);
  const MarkerSpec spec{MarkerShape::kDisk, 7, {255, 0, 0}, 1.0};
  const ImageBuffer once = render_marker(base, spec, {20, 20});
  const ImageBuffer twice = render_marker(once, spec, {20, 20});
  CHECK(once == twice);
}

TEST_CASE("disjoint markers commute") {
  const ImageBuffer base = testutil::make_test_image(64, 64);
  const MarkerSpec a{MarkerShape::kDisk, 5, {255, 0, 0}, 0.8};
  const MarkerSpec b{MarkerShape::kSquare, 6, {0, 0, 255}, 0.6};
  const ImageBuffer ab =
      render_marker(render_marker(base, a, {10, 10}), b, {40, 40});
  const ImageBuffer ba =
      render_marker(render_marker(base, b, {40, 40}), a, {10, 10});
  CHECK(ab == ba);
}

TEST_CASE("partial opacity blends per channel") {
  ImageBuffer base(3, 3);
  for (uint8_t& v : base.pixels_mut()) v = 100;
  const MarkerSpec spec{MarkerShape::kDisk, 0, {200, 0, 100}, 0.5};
  const ImageBuffer marked = render_marker(base, spec, {1, 1});
  const uint8_t* px = marked.at(1, 1);
  CHECK(px[0] == 150);  // 0.5*200 + 0.5*100
  CHECK(px[1] == 50);
  CHECK(px[2] == 100);
}

TEST_CASE("render_marker rejects malformed input") {
  const ImageBuffer base = gray_canvas(4, 4);
  CHECK_THROWS(render_marker(base, {MarkerShape::kDisk, -1, {0, 0, 0}, 1.0}, {0, 0}));
  CHECK_THROWS(render_marker(base, {MarkerShape::kDisk, 1, {0, 0, 0}, 0.0}, {0, 0}));
  CHECK_THROWS(render_marker(ImageBuffer{}, {MarkerShape::kDisk, 1, {0, 0, 0}, 1.0},
                             {0, 0}));
}

TEST_CASE("marker_for_step follows the step sequence") {
  const MarkerSpec s1 = marker_for_step(1, MarkerProfile::kLarge);
  CHECK(s1.shape == MarkerShape::kDisk);
  CHECK(s1.size == 100);
  CHECK(s1.color == std::array<uint8_t, 3>{255, 0, 0});

  const MarkerSpec s2 = marker_for_step(2, MarkerProfile::kLarge);
  CHECK(s2.shape == MarkerShape::kSquare);
  CHECK(s2.size == 100);
  CHECK(s2.color == std::array<uint8_t, 3>{0, 0, 255});

  const MarkerSpec small1 = marker_for_step(1, MarkerProfile::kSmall);
  CHECK(small1.shape == MarkerShape::kDisk);
  CHECK(small1.size == 10);
  CHECK(small1.color == std::array<uint8_t, 3>{255, 0, 0});

  // Steps >= 3 cycle green disk / magenta square.
  CHECK(marker_for_step(3, MarkerProfile::kLarge).shape == MarkerShape::kDisk);
  CHECK(marker_for_step(3, MarkerProfile::kLarge).color ==
        std::array<uint8_t, 3>{0, 200, 0});
  CHECK(marker_for_step(4, MarkerProfile::kLarge).shape == MarkerShape::kSquare);
  CHECK(marker_for_step(5, MarkerProfile::kLarge).shape == MarkerShape::kDisk);
  CHECK_THROWS(marker_for_step(0, MarkerProfile::kLarge));
}
