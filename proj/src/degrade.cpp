#include "cog/degrade.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cog {

namespace {

using nlohmann::json;

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic uniform/gaussian draws; distributions are hand-rolled so
// outputs do not depend on the standard library's implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform01() { return (engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(engine_() % static_cast<uint64_t>(hi - lo + 1));
  }
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0;
};

uint64_t substream_seed(uint64_t seed, const std::string& stage) {
  return splitmix64(seed ^ fnv1a64(stage));
}

uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::llround(std::clamp(v, 0.0, 255.0)));
}

struct StageNames {
  DegradeStage stage;
  const char* name;
};

constexpr StageNames kStageNames[] = {
    {DegradeStage::kColorShift, "color_shift"},
    {DegradeStage::kLensFlare, "lens_flare"},
    {DegradeStage::kPerlinOverlay, "perlin_overlay"},
    {DegradeStage::kWearPattern, "wear_pattern"},
    {DegradeStage::kGaussianNoise, "gaussian_noise"},
    {DegradeStage::kMotionBlur, "motion_blur"},
    {DegradeStage::kSpecularHighlight, "specular_highlight"},
    {DegradeStage::kChromaticAberration, "chromatic_aberration"},
    {DegradeStage::kJpegRecompress, "jpeg_recompress"},
    {DegradeStage::kColorQuantize, "color_quantize"},
    {DegradeStage::kLightingGradient, "lighting_gradient"},
    {DegradeStage::kOcclusion, "occlusion"},
    {DegradeStage::kPerspective, "perspective"},
};

}  // namespace

const std::vector<DegradeStage>& all_degrade_stages() {
  static const std::vector<DegradeStage> stages = [] {
    std::vector<DegradeStage> out;
    for (const auto& entry : kStageNames) out.push_back(entry.stage);
    return out;
  }();
  return stages;
}

std::string stage_name(DegradeStage stage) {
  for (const auto& entry : kStageNames) {
    if (entry.stage == stage) return entry.name;
  }
  return "unknown";
}

std::optional<DegradeStage> stage_from_name(const std::string& name) {
  for (const auto& entry : kStageNames) {
    if (name == entry.name) return entry.stage;
  }
  return std::nullopt;
}

Homography Homography::translation(double tx, double ty) {
  Homography H;
  H.h[0][2] = tx;
  H.h[1][2] = ty;
  return H;
}

std::pair<double, double> apply_homography_exact(double x, double y,
                                                 const Homography& H) {
  const double w = H.h[2][0] * x + H.h[2][1] * y + H.h[2][2];
  if (std::abs(w) <= 1e-9) {
    throw DegenerateMappingError("homography denominator near zero");
  }
  return {(H.h[0][0] * x + H.h[0][1] * y + H.h[0][2]) / w,
          (H.h[1][0] * x + H.h[1][1] * y + H.h[1][2]) / w};
}

Point apply_homography(const Point& p, const Homography& H) {
  const auto [x, y] = apply_homography_exact(p.x, p.y, H);
  return {round_half_away(x), round_half_away(y)};
}

Homography invert(const Homography& H) {
  const auto& a = H.h;
  const double det =
      a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
      a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
      a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (std::abs(det) < 1e-12) {
    throw DegenerateMappingError("homography not invertible");
  }
  Homography inv;
  inv.h[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  inv.h[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  inv.h[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  inv.h[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  inv.h[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  inv.h[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  inv.h[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  inv.h[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  inv.h[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  const double norm = inv.h[2][2];
  if (std::abs(norm) < 1e-12) {
    throw DegenerateMappingError("inverse homography cannot be normalized");
  }
  for (auto& row : inv.h) {
    for (double& v : row) v /= norm;
  }
  return inv;
}

Homography homography_from_corners(
    int width, int height, const std::array<std::pair<double, double>, 4>& dst) {
  // Source corners TL, TR, BR, BL.
  const std::array<std::pair<double, double>, 4> src = {{
      {0.0, 0.0},
      {static_cast<double>(width - 1), 0.0},
      {static_cast<double>(width - 1), static_cast<double>(height - 1)},
      {0.0, static_cast<double>(height - 1)},
  }};

  // 8x8 linear system for the homography coefficients (h22 = 1).
  std::array<std::array<double, 9>, 8> m{};
  for (int i = 0; i < 4; ++i) {
    const auto [sx, sy] = src[i];
    const auto [dx, dy] = dst[i];
    m[2 * i] = {sx, sy, 1, 0, 0, 0, -sx * dx, -sy * dx, dx};
    m[2 * i + 1] = {0, 0, 0, sx, sy, 1, -sx * dy, -sy * dy, dy};
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 8; ++row) {
      if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
    }
    if (std::abs(m[pivot][col]) < 1e-12) {
      throw DegenerateMappingError("degenerate corner configuration");
    }
    std::swap(m[col], m[pivot]);
    for (int row = 0; row < 8; ++row) {
      if (row == col) continue;
      const double f = m[row][col] / m[col][col];
      for (int k = col; k < 9; ++k) m[row][k] -= f * m[col][k];
    }
  }
  Homography H;
  H.h[0] = {m[0][8] / m[0][0], m[1][8] / m[1][1], m[2][8] / m[2][2]};
  H.h[1] = {m[3][8] / m[3][3], m[4][8] / m[4][4], m[5][8] / m[5][5]};
  H.h[2] = {m[6][8] / m[6][6], m[7][8] / m[7][7], 1.0};
  return H;
}

TargetSpec map_target(const TargetSpec& target, const Homography& H) {
  if (const auto* box = std::get_if<BBox>(&target)) {
    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    const std::array<std::pair<double, double>, 4> corners = {{
        {static_cast<double>(box->x1), static_cast<double>(box->y1)},
        {static_cast<double>(box->x2), static_cast<double>(box->y1)},
        {static_cast<double>(box->x2), static_cast<double>(box->y2)},
        {static_cast<double>(box->x1), static_cast<double>(box->y2)},
    }};
    for (const auto& [cx, cy] : corners) {
      const auto [mx, my] = apply_homography_exact(cx, cy, H);
      min_x = std::min(min_x, mx);
      min_y = std::min(min_y, my);
      max_x = std::max(max_x, mx);
      max_y = std::max(max_y, my);
    }
    // Axis-aligned hull, rounded outward.
    return BBox{static_cast<int>(std::floor(min_x)),
                static_cast<int>(std::floor(min_y)),
                static_cast<int>(std::ceil(max_x)),
                static_cast<int>(std::ceil(max_y))};
  }
  auto pt = std::get<PointTolerance>(target);
  pt.center = apply_homography(pt.center, H);
  return pt;
}

uint64_t derive_instance_seed(uint64_t seed, const std::string& instance_id) {
  return splitmix64(seed ^ fnv1a64(instance_id));
}

double perlin2(double x, double y, uint64_t seed) {
  // Seed-shuffled permutation table, wrapped to 512 entries.
  static thread_local uint64_t cached_seed = ~0ull;
  static thread_local std::array<int, 512> perm;
  if (cached_seed != seed) {
    std::array<int, 256> table;
    for (int i = 0; i < 256; ++i) table[i] = i;
    Rng rng(seed);
    for (int i = 255; i > 0; --i) {
      std::swap(table[i], table[rng.uniform_int(0, i)]);
    }
    for (int i = 0; i < 512; ++i) perm[i] = table[i & 255];
    cached_seed = seed;
  }

  static constexpr double kGrad[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                         {1, 1},  {-1, 1}, {1, -1}, {-1, -1}};
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int xi = static_cast<int>(fx) & 255;
  const int yi = static_cast<int>(fy) & 255;
  const double xf = x - fx;
  const double yf = y - fy;

  auto grad_dot = [&](int cx, int cy, double dx, double dy) {
    const double* g = kGrad[perm[perm[cx & 255] + (cy & 255)] & 7];
    return g[0] * dx + g[1] * dy;
  };
  auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };

  const double n00 = grad_dot(xi, yi, xf, yf);
  const double n10 = grad_dot(xi + 1, yi, xf - 1, yf);
  const double n01 = grad_dot(xi, yi + 1, xf, yf - 1);
  const double n11 = grad_dot(xi + 1, yi + 1, xf - 1, yf - 1);
  const double u = fade(xf);
  const double v = fade(yf);
  return lerp(lerp(n00, n10, u), lerp(n01, n11, u), v);
}

namespace {

// Axis-aligned footprint of a target, for occlusion disjointness checks.
BBox target_footprint(const TargetSpec& target) {
  if (const auto* box = std::get_if<BBox>(&target)) return *box;
  const auto& pt = std::get<PointTolerance>(target);
  const int r = static_cast<int>(std::ceil(pt.radius));
  return {pt.center.x - r, pt.center.y - r, pt.center.x + r, pt.center.y + r};
}

bool boxes_intersect(const BBox& a, const BBox& b) {
  return a.x1 <= b.x2 && b.x1 <= a.x2 && a.y1 <= b.y2 && b.y1 <= a.y2;
}

using StageFn = void (*)(ImageBuffer&, TargetSpec&, double, Rng&, json&, bool&);

double bilinear_sample(const ImageBuffer& img, double x, double y, int c);

void stage_color_shift(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                       json& prov, bool&) {
  double shift[3];
  for (double& d : shift) d = rng.uniform(-1.0, 1.0) * 30.0 * s;
  prov["shift_rgb"] = {shift[0], shift[1], shift[2]};
  for (size_t i = 0; i < img.pixels_mut().size(); ++i) {
    img.pixels_mut()[i] = clamp_u8(img.pixels_mut()[i] + shift[i % 3]);
  }
}

void additive_radial(ImageBuffer& img, double cx, double cy, double sigma,
                     double peak) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double add = peak * std::exp(-d2 * inv2s2);
      if (add < 0.5) continue;
      uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = clamp_u8(px[c] + add);
    }
  }
}

void stage_lens_flare(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                      json& prov, bool&) {
  const double cx = rng.uniform01() * img.width();
  const double cy = rng.uniform01() * img.height();
  const double radius =
      rng.uniform(0.2, 0.5) * std::min(img.width(), img.height());
  prov["center"] = {cx, cy};
  prov["radius"] = radius;
  prov["peak"] = 80.0 * s;
  additive_radial(img, cx, cy, radius / 2.0, 80.0 * s);
}

void stage_perlin_overlay(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                          json& prov, bool&) {
  const uint64_t noise_seed = static_cast<uint64_t>(rng.uniform_int(0, 1 << 30));
  const double freq = 1.0 / 64.0;
  const double amplitude = 40.0 * s;
  prov["noise_seed"] = noise_seed;
  prov["frequency"] = freq;
  prov["amplitude"] = amplitude;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = amplitude * perlin2(x * freq, y * freq, noise_seed);
      uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = clamp_u8(px[c] + v);
    }
  }
}

void stage_wear_pattern(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                        json& prov, bool&) {
  const uint64_t noise_seed = static_cast<uint64_t>(rng.uniform_int(0, 1 << 30));
  const double freq = 1.0 / 32.0;
  const double threshold = 0.25;
  const double depth = 60.0 * s;  // maximum darkening
  prov["noise_seed"] = noise_seed;
  prov["frequency"] = freq;
  prov["threshold"] = threshold;
  prov["depth"] = depth;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = perlin2(x * freq, y * freq, noise_seed);
      if (v <= threshold) continue;
      const double t = (v - threshold) / (1.0 - threshold);
      uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = clamp_u8(px[c] - depth * t);
    }
  }
}

void stage_gaussian_noise(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                          json& prov, bool&) {
  const double sigma = 25.0 * s;
  prov["sigma"] = sigma;
  for (uint8_t& v : img.pixels_mut()) {
    v = clamp_u8(v + sigma * rng.gaussian());
  }
}

void stage_motion_blur(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                       json& prov, bool&) {
  const double angle = rng.uniform(0.0, std::numbers::pi);
  // Streak half-length in pixels; the tap count is fixed so the kernel
  // varies continuously (and the blur monotonically) with severity.
  const double extent = 7.0 * s;
  constexpr int kTaps = 15;
  prov["angle"] = angle;
  prov["extent"] = extent;
  if (extent <= 0) return;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  ImageBuffer src = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double sum[3] = {0, 0, 0};
      for (int k = 0; k < kTaps; ++k) {
        const double t = extent * (2.0 * k / (kTaps - 1) - 1.0);
        for (int c = 0; c < 3; ++c) {
          sum[c] += bilinear_sample(src, x + t * dx, y + t * dy, c);
        }
      }
      uint8_t* out = img.at(x, y);
      for (int c = 0; c < 3; ++c) out[c] = clamp_u8(sum[c] / kTaps);
    }
  }
}

void stage_specular_highlight(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                              json& prov, bool&) {
  const double cx = rng.uniform01() * img.width();
  const double cy = rng.uniform01() * img.height();
  const double radius =
      rng.uniform(0.05, 0.15) * std::min(img.width(), img.height());
  prov["center"] = {cx, cy};
  prov["radius"] = radius;
  prov["peak"] = 80.0 * s;
  additive_radial(img, cx, cy, radius / 2.0, 80.0 * s);
}

void stage_chromatic_aberration(ImageBuffer& img, TargetSpec&, double s, Rng&,
                                json& prov, bool&) {
  const int shift = round_half_away(3.0 * s);
  prov["shift_px"] = shift;
  if (shift == 0) return;
  ImageBuffer src = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int xr = std::clamp(x - shift, 0, img.width() - 1);
      const int xb = std::clamp(x + shift, 0, img.width() - 1);
      img.at(x, y)[0] = src.at(xr, y)[0];
      img.at(x, y)[2] = src.at(xb, y)[2];
    }
  }
}

void stage_jpeg_recompress(ImageBuffer& img, TargetSpec&, double s, Rng&,
                           json& prov, bool&) {
  const int quality = 95 - round_half_away(70.0 * s);
  prov["quality"] = quality;
  img = jpeg_roundtrip(img, quality);
}

void stage_color_quantize(ImageBuffer& img, TargetSpec&, double s, Rng&,
                          json& prov, bool&) {
  const int levels = 256 - round_half_away(224.0 * s);
  prov["levels"] = levels;
  if (levels >= 256) return;
  const double step = 255.0 / (levels - 1);
  for (uint8_t& v : img.pixels_mut()) {
    v = clamp_u8(std::llround(v / step) * step);
  }
}

void stage_lighting_gradient(ImageBuffer& img, TargetSpec&, double s, Rng& rng,
                             json& prov, bool&) {
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amplitude = 0.4 * s;  // multiplier in [1 - 0.4 s, 1 + 0.4 s]
  prov["angle"] = angle;
  prov["amplitude"] = amplitude;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  const double half_span =
      0.5 * (std::abs(dx) * (img.width() - 1) + std::abs(dy) * (img.height() - 1));
  const double cx = (img.width() - 1) / 2.0;
  const double cy = (img.height() - 1) / 2.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double proj = ((x - cx) * dx + (y - cy) * dy) /
                          (half_span > 0 ? half_span : 1.0);
      const double mul = 1.0 + amplitude * std::clamp(proj, -1.0, 1.0);
      uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = clamp_u8(px[c] * mul);
    }
  }
}

void stage_occlusion(ImageBuffer& img, TargetSpec& target, double s, Rng& rng,
                     json& prov, bool& skipped) {
  const BBox footprint = target_footprint(target);
  // The candidate rectangle is validated at its full (severity 1) extent so
  // the severity-scaled rectangle is always nested inside a disjoint region.
  for (int attempt = 1; attempt <= 100; ++attempt) {
    const double cx = rng.uniform01() * img.width();
    const double cy = rng.uniform01() * img.height();
    const double full_w = rng.uniform(0.10, 0.25) * img.width();
    const double full_h = rng.uniform(0.10, 0.25) * img.height();
    const uint8_t fill[3] = {static_cast<uint8_t>(rng.uniform_int(40, 120)),
                             static_cast<uint8_t>(rng.uniform_int(40, 120)),
                             static_cast<uint8_t>(rng.uniform_int(40, 120))};
    const BBox full_rect = {round_half_away(cx - full_w / 2),
                            round_half_away(cy - full_h / 2),
                            round_half_away(cx + full_w / 2),
                            round_half_away(cy + full_h / 2)};
    if (boxes_intersect(full_rect, footprint)) continue;

    const double w = full_w * s;
    const double h = full_h * s;
    const BBox rect = {round_half_away(cx - w / 2), round_half_away(cy - h / 2),
                       round_half_away(cx + w / 2), round_half_away(cy + h / 2)};
    prov["attempts"] = attempt;
    prov["rect"] = {rect.x1, rect.y1, rect.x2, rect.y2};
    prov["fill_rgb"] = {fill[0], fill[1], fill[2]};
    for (int y = std::max(rect.y1, 0); y <= std::min(rect.y2, img.height() - 1);
         ++y) {
      for (int x = std::max(rect.x1, 0); x <= std::min(rect.x2, img.width() - 1);
           ++x) {
        uint8_t* px = img.at(x, y);
        for (int c = 0; c < 3; ++c) px[c] = fill[c];
      }
    }
    return;
  }
  skipped = true;
  prov["skipped"] = true;
  prov["attempts"] = 100;
}

double bilinear_sample(const ImageBuffer& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, img.width() - 1.0);
  y = std::clamp(y, 0.0, img.height() - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0)[c] * (1 - fx) + img.at(x1, y0)[c] * fx;
  const double bot = img.at(x0, y1)[c] * (1 - fx) + img.at(x1, y1)[c] * fx;
  return top * (1 - fy) + bot * fy;
}

void stage_perspective(ImageBuffer& img, TargetSpec& target, double s, Rng& rng,
                       json& prov, bool&) {
  // Unit jitter drawn first so the displacement scales linearly with severity.
  std::array<double, 8> unit;
  for (double& u : unit) u = rng.uniform(-1.0, 1.0);
  const double jx = 0.03 * s * (img.width() - 1);
  const double jy = 0.03 * s * (img.height() - 1);
  const std::array<std::pair<double, double>, 4> dst = {{
      {unit[0] * jx, unit[1] * jy},
      {(img.width() - 1) + unit[2] * jx, unit[3] * jy},
      {(img.width() - 1) + unit[4] * jx, (img.height() - 1) + unit[5] * jy},
      {unit[6] * jx, (img.height() - 1) + unit[7] * jy},
  }};
  const Homography H = homography_from_corners(img.width(), img.height(), dst);
  prov["dst_corners"] = {dst[0].first, dst[0].second, dst[1].first,
                         dst[1].second, dst[2].first, dst[2].second,
                         dst[3].first, dst[3].second};
  json hj = json::array();
  for (const auto& row : H.h) hj.push_back({row[0], row[1], row[2]});
  prov["homography"] = std::move(hj);

  const Homography Hinv = invert(H);
  ImageBuffer src = std::move(img);
  img = ImageBuffer(src.width(), src.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto [sx, sy] = apply_homography_exact(x, y, Hinv);
      uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) {
        px[c] = clamp_u8(bilinear_sample(src, sx, sy, c));
      }
    }
  }

  target = map_target(target, H);
}

StageFn stage_fn(DegradeStage stage) {
  switch (stage) {
    case DegradeStage::kColorShift: return stage_color_shift;
    case DegradeStage::kLensFlare: return stage_lens_flare;
    case DegradeStage::kPerlinOverlay: return stage_perlin_overlay;
    case DegradeStage::kWearPattern: return stage_wear_pattern;
    case DegradeStage::kGaussianNoise: return stage_gaussian_noise;
    case DegradeStage::kMotionBlur: return stage_motion_blur;
    case DegradeStage::kSpecularHighlight: return stage_specular_highlight;
    case DegradeStage::kChromaticAberration: return stage_chromatic_aberration;
    case DegradeStage::kJpegRecompress: return stage_jpeg_recompress;
    case DegradeStage::kColorQuantize: return stage_color_quantize;
    case DegradeStage::kLightingGradient: return stage_lighting_gradient;
    case DegradeStage::kOcclusion: return stage_occlusion;
    case DegradeStage::kPerspective: return stage_perspective;
  }
  throw std::logic_error("unknown degrade stage");
}

}  // namespace

DegradeResult degrade_instance(const ImageBuffer& image, const TargetSpec& target,
                               const DegradeConfig& config) {
  if (config.severity < 0 || config.severity > 1) {
    throw DegradeConfigError("severity must be in [0, 1]");
  }
  if (config.severity > 0 && config.stages.empty()) {
    throw DegradeConfigError("severity > 0 requires at least one stage");
  }

  DegradeResult result;
  result.target = target;

  json prov;
  prov["seed"] = config.seed;
  prov["severity"] = config.severity;
  prov["stages"] = json::array();

  if (config.severity == 0) {
    result.image = image;
    result.provenance = prov.dump();
    return result;
  }

  result.image = image;
  for (const DegradeStage stage : all_degrade_stages()) {
    if (std::find(config.stages.begin(), config.stages.end(), stage) ==
        config.stages.end()) {
      continue;
    }
    const std::string name = stage_name(stage);
    Rng rng(substream_seed(config.seed, name));
    json stage_prov;
    stage_prov["stage"] = name;
    bool skipped = false;
    if (stage == DegradeStage::kJpegRecompress && config.output_quality >= 0) {
      stage_prov["quality"] = config.output_quality;
      result.image = jpeg_roundtrip(result.image, config.output_quality);
    } else {
      stage_fn(stage)(result.image, result.target, config.severity, rng,
                      stage_prov, skipped);
    }
    if (stage == DegradeStage::kOcclusion && skipped) {
      result.occlusion_skipped = true;
    }
    prov["stages"].push_back(std::move(stage_prov));
  }
  result.provenance = prov.dump();
  return result;
}

}  // namespace cog
