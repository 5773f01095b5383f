#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cog/core.hpp"
#include "cog/image.hpp"

namespace cog {

// Stage catalog, in application order. Each stage is pure given the image,
// its seed-derived substream, and the severity.
enum class DegradeStage {
  kColorShift,
  kLensFlare,
  kPerlinOverlay,
  kWearPattern,
  kGaussianNoise,
  kMotionBlur,
  kSpecularHighlight,
  kChromaticAberration,
  kJpegRecompress,
  kColorQuantize,
  kLightingGradient,
  kOcclusion,
  kPerspective,
};

const std::vector<DegradeStage>& all_degrade_stages();
std::string stage_name(DegradeStage stage);
std::optional<DegradeStage> stage_from_name(const std::string& name);

struct DegradeConfig {
  uint64_t seed = 0;
  double severity = 0;  // in [0, 1]
  std::vector<DegradeStage> stages;  // non-empty unless severity == 0
  int output_quality = -1;  // JPEG quality override; -1 derives from severity
};

struct DegradeConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 3x3 projective transform, normalized so h[2][2] == 1.
struct Homography {
  std::array<std::array<double, 3>, 3> h = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);
};

struct DegenerateMappingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Projective map, rounded half away from zero; throws when the denominator
// is within 1e-9 of zero.
Point apply_homography(const Point& p, const Homography& H);

// Exact (non-rounded) projective map, for label-transport checks.
std::pair<double, double> apply_homography_exact(double x, double y, const Homography& H);

Homography invert(const Homography& H);

// Label transport: point targets map through H directly; box targets become
// the axis-aligned hull of their four mapped corners, rounded outward.
TargetSpec map_target(const TargetSpec& target, const Homography& H);

// Least homography mapping the unit corners of a w x h image to the four
// given destination corners (order: TL, TR, BR, BL).
Homography homography_from_corners(int width, int height,
                                   const std::array<std::pair<double, double>, 4>& dst);

// Per-instance substream for batch generation; deterministic and independent
// of scheduling order.
uint64_t derive_instance_seed(uint64_t seed, const std::string& instance_id);

// Classic 2-D gradient noise in [-1, 1]: seed-shuffled 256-entry permutation
// table, 8 gradient directions, quintic fade. Zero at every integer lattice
// point.
double perlin2(double x, double y, uint64_t seed);

// Provenance: every random parameter each stage drew, as a canonical JSON
// string, so any choice can be audited and re-tuned.
struct DegradeResult {
  ImageBuffer image;
  TargetSpec target;
  std::string provenance;  // canonical JSON
  bool occlusion_skipped = false;  // no disjoint rectangle found in 100 draws
};

// Applies the selected stages in catalog order. Each stage draws from an
// independent substream derived from (seed, stage name), so enabling or
// disabling one stage never perturbs another's randomness. Photometric
// stages leave the target unchanged; perspective maps it through the same
// homography; occlusion rectangles are resampled until disjoint from the
// target footprint.
DegradeResult degrade_instance(const ImageBuffer& image, const TargetSpec& target,
                               const DegradeConfig& config);

}  // namespace cog
