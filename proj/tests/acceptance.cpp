// Acceptance suite: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. The live-endpoint smoke check is
// non-gating and reports SKIP when no endpoint is configured.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "cog/degrade.hpp"
#include "cog/digest.hpp"
#include "cog/evaluator.hpp"
#include "cog/marker.hpp"
#include "cog/model_client.hpp"
#include "cog/pipeline.hpp"
#include "test_util.hpp"

using namespace cog;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::set<std::pair<int, int>> diff_set(const ImageBuffer& a,
                                       const ImageBuffer& b) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (std::memcmp(a.at(x, y), b.at(x, y), 3) != 0) out.insert({x, y});
    }
  }
  return out;
}

// --- criterion 1: marker rasterization vs brute-force scan ----------------

std::set<std::pair<int, int>> brute_footprint(const MarkerSpec& spec,
                                              const Point& c, int w, int h) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool inside;
      if (spec.shape == MarkerShape::kDisk) {
        const long dx = x - c.x, dy = y - c.y;
        inside = dx * dx + dy * dy <= static_cast<long>(spec.size) * spec.size;
      } else {
        const int lo_x = c.x - spec.size / 2, lo_y = c.y - spec.size / 2;
        inside = x >= lo_x && x < lo_x + spec.size && y >= lo_y &&
                 y < lo_y + spec.size;
      }
      if (inside) out.insert({x, y});
    }
  }
  return out;
}

bool criterion_marker_oracle() {
  const auto start = Clock::now();
  const ImageBuffer big = testutil::make_test_image(256, 256);
  const MarkerSpec disk10{MarkerShape::kDisk, 10, {255, 0, 0}, 1.0};
  if (diff_set(render_marker(big, disk10, {128, 128}), big).size() != 317) {
    return false;
  }
  const MarkerSpec square100{MarkerShape::kSquare, 100, {0, 0, 255}, 1.0};
  if (diff_set(render_marker(big, square100, {128, 128}), big).size() != 10000) {
    return false;
  }

  const ImageBuffer canvas = testutil::make_test_image(64, 64);
  for (const MarkerShape shape : {MarkerShape::kDisk, MarkerShape::kSquare}) {
    for (int size = shape == MarkerShape::kDisk ? 0 : 1; size <= 20; ++size) {
      const MarkerSpec spec{shape, size, {0, 200, 0}, 1.0};
      const Point center{31, 29};
      const auto rendered = diff_set(render_marker(canvas, spec, center), canvas);
      if (rendered != brute_footprint(spec, center, 64, 64)) return false;
    }
  }
  return seconds_since(start) < 1.0;
}

// --- criterion 2: published aggregation rows -------------------------------

bool criterion_aggregation_rows() {
  const bool consistent = weighted_average({{50.0, 320}, {40.0, 100}}) == 47.6 &&
                          weighted_average({{84.7, 320}, {78.0, 100}}) == 83.1 &&
                          weighted_average({{90.9, 320}, {87.0, 100}}) == 90.0;
  // Two rows of the source table do not recombine under instance weighting;
  // they land at 80.2 and 82.3 instead of the published 81.2 and 84.3.
  const bool inconsistent_flagged =
      weighted_average({{82.2, 320}, {74.0, 100}}) == 80.2 &&
      weighted_average({{83.6, 320}, {78.0, 100}}) == 82.3;
  return consistent && inconsistent_flagged;
}

// --- criterion 3: triple-step trace fidelity --------------------------------

bool criterion_trace_fidelity() {
  const ImageBuffer image = testutil::make_test_image(400, 400);
  const Point p1{150, 150}, p2{210, 180}, p3{212, 182};

  PipelineConfig config;
  for (int i = 1; i <= 3; ++i) {
    StepConfig step;
    step.backend_ref = "mock";
    step.modality = i == 1 ? FeedbackModality::kNone : FeedbackModality::kBoth;
    step.marker = marker_for_step(i, MarkerProfile::kLarge);
    config.steps.push_back(step);
  }
  Script script;
  script[{"acc", 1}] = "(150, 150)";
  script[{"acc", 2}] = "(210, 180)";
  script[{"acc", 3}] = "(212, 182)";
  BackendMap backends;
  backends["mock"] = make_scripted_backend(BackendDescriptor{}, script);

  std::string first_digest;
  for (int repeat = 0; repeat < 10; ++repeat) {
    const PipelineRun run = run_pipeline(config, backends, image, "target", "acc");
    if (run.trace.records.size() != 3) return false;
    if (!(run.final_point == p3)) return false;
    if (run.step_images.size() != 3) return false;

    // Step 2 sees exactly the step-1 disk; step 3 sees the union with the
    // step-2 square.
    const ImageBuffer after1 = render_marker(image, config.steps[0].marker, p1);
    const ImageBuffer after2 = render_marker(after1, config.steps[1].marker, p2);
    if (!(run.step_images[1] == after1)) return false;
    if (!(run.step_images[2] == after2)) return false;
    const auto d1 = diff_set(after1, image);
    const auto d2 = diff_set(after2, image);
    const auto square = diff_set(render_marker(image, config.steps[1].marker, p2),
                                 image);
    std::set<std::pair<int, int>> expected_union = d1;
    expected_union.insert(square.begin(), square.end());
    if (d2 != expected_union) return false;

    std::string digest;
    for (const auto& record : run.trace.records) {
      digest += record.step_image_digest + record.raw_reply;
    }
    if (repeat == 0) first_digest = digest;
    else if (digest != first_digest) return false;
  }
  return true;
}

// --- criterion 4: oracle end-to-end -----------------------------------------

bool criterion_oracle_end_to_end() {
  const auto start = Clock::now();
  testutil::TempDir dir("acceptance_eval");
  Manifest manifest;
  manifest.base_dir = dir.path().string();
  manifest.image_root = ".";
  manifest.categories = {"a", "b"};
  save_png(testutil::make_test_image(96, 96), (dir.path() / "s.png").string());
  Script oracle;
  for (int i = 0; i < 20; ++i) {
    Instance inst;
    inst.id = "n" + std::to_string(i);
    inst.image_path = "s.png";
    inst.instruction = "element " + std::to_string(i);
    inst.category = manifest.categories[i % 2];
    const int x = 6 + (i * 4) % 80, y = 6 + (i * 7) % 80;
    inst.target = BBox{x, y, x + 6, y + 6};
    oracle[{inst.id, 1}] =
        "(" + std::to_string(x + 3) + ", " + std::to_string(y + 3) + ")";
    manifest.instances.push_back(std::move(inst));
  }
  PipelineConfig config;
  StepConfig step;
  step.backend_ref = "mock";
  config.steps.push_back(step);

  BackendMap hit, miss;
  hit["mock"] = make_scripted_backend(BackendDescriptor{}, oracle);
  miss["mock"] = make_scripted_backend(BackendDescriptor{}, {},
                                       std::string("(-99, -99)"));

  const EvalReport perfect = evaluate(manifest, config, hit, "d", {1, ""});
  if (perfect.overall.accuracy != 100.0) return false;
  const EvalReport zero = evaluate(manifest, config, miss, "d", {1, ""});
  if (zero.overall.accuracy != 0.0) return false;

  std::string bytes1, bytes8;
  for (const int parallelism : {1, 8}) {
    const EvalReport report =
        evaluate(manifest, config, hit, "d", {parallelism, ""});
    const std::string rendered =
        render_report(report, ReportFormat::kMarkdownTable) +
        render_report(report, ReportFormat::kCsv) +
        render_report(report, ReportFormat::kJsonl);
    (parallelism == 1 ? bytes1 : bytes8) = rendered;
  }
  return bytes1 == bytes8 && seconds_since(start) < 10.0;
}

// --- criterion 5: parser robustness -----------------------------------------

bool criterion_parser_robustness() {
  std::mt19937 rng(99);
  const std::string alphabet =
      "0123456789(){}[],.:xy\"-+ eE\n\t<>percentanswer";
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 60);
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) s += alphabet[pick(rng)];
    try {
      const Point p = parse_point(s, CoordinateConvention::kAbsolutePixels,
                                  1920, 1080);
      (void)p;
    } catch (const PointParseError&) {
      // Rejection is the expected outcome for most random strings.
    } catch (...) {
      return false;
    }
  }

  // Round-trip identity on the three supported reply shapes.
  std::uniform_int_distribution<int> coord(0, 9999);
  for (int i = 0; i < 300; ++i) {
    const Point p{coord(rng), coord(rng)};
    const std::string forms[3] = {
        "{\"x\": " + std::to_string(p.x) + ", \"y\": " + std::to_string(p.y) + "}",
        "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")",
        std::to_string(p.x) + ", " + std::to_string(p.y)};
    for (const std::string& form : forms) {
      if (!(parse_point(form, CoordinateConvention::kAbsolutePixels, 10000,
                        10000) == p)) {
        return false;
      }
    }
  }

  // normalized_1000 rescaling, exact on a 10x10 grid of round values.
  for (int gx = 0; gx < 10; ++gx) {
    for (int gy = 0; gy < 10; ++gy) {
      const int x = gx * 100, y = gy * 100;
      const std::string reply =
          "(" + std::to_string(x) + ", " + std::to_string(y) + ")";
      const Point p =
          parse_point(reply, CoordinateConvention::kNormalized1000, 2000, 500);
      if (!(p == Point{x * 2, y / 2})) return false;
    }
  }
  return true;
}

// --- criterion 6: degradation determinism and label transport ---------------

double independent_perlin(double x, double y, uint64_t seed);

bool criterion_degradation() {
  const ImageBuffer image = testutil::make_test_image(128, 128);
  const TargetSpec target = BBox{50, 50, 62, 62};

  DegradeConfig id_config;
  id_config.severity = 0;
  if (!(degrade_instance(image, target, id_config).image == image)) return false;

  DegradeConfig config;
  config.seed = 2024;
  config.severity = 0.6;
  config.stages = all_degrade_stages();
  const DegradeResult a = degrade_instance(image, target, config);
  const DegradeResult b = degrade_instance(image, target, config);
  if (!(a.image == b.image) || a.provenance != b.provenance) return false;

  // Label transport round-trips through the inverse within 1 px on 100
  // random mild homographies (corner jitter up to 3% per axis).
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::uniform_int_distribution<int> coord(20, 107);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 128, h = 128;
    const std::array<std::pair<double, double>, 4> dst = {{
        {jitter(rng) * w, jitter(rng) * h},
        {(w - 1) + jitter(rng) * w, jitter(rng) * h},
        {(w - 1) + jitter(rng) * w, (h - 1) + jitter(rng) * h},
        {jitter(rng) * w, (h - 1) + jitter(rng) * h},
    }};
    const Homography H = homography_from_corners(w, h, dst);
    const Point original{coord(rng), coord(rng)};
    const auto mapped = map_target(PointTolerance{original, 4}, H);
    const Point back =
        apply_homography(std::get<PointTolerance>(mapped).center, invert(H));
    if (std::abs(back.x - original.x) > 1 || std::abs(back.y - original.y) > 1) {
      return false;
    }
  }

  // Occlusion rectangles stay disjoint from the target on 500 samples.
  std::uniform_int_distribution<int> pos(8, 110);
  int checked = 0;
  for (uint64_t seed = 0; checked < 500; ++seed) {
    const int x = pos(rng), y = pos(rng);
    const TargetSpec t = BBox{x, y, std::min(x + 10, 127), std::min(y + 10, 127)};
    DegradeConfig occ;
    occ.seed = seed;
    occ.severity = 1.0;
    occ.stages = {DegradeStage::kOcclusion};
    const DegradeResult r = degrade_instance(image, t, occ);
    if (r.occlusion_skipped) continue;
    ++checked;
    const auto& box = std::get<BBox>(t);
    for (int py = box.y1; py <= box.y2; ++py) {
      for (int px = box.x1; px <= box.x2; ++px) {
        if (std::memcmp(r.image.at(px, py), image.at(px, py), 3) != 0) {
          return false;
        }
      }
    }
  }

  // Gradient noise: zero at 1000 lattice points, matches the independent
  // reimplementation to 1e-9 across a 256x256 grid.
  std::uniform_int_distribution<int> lattice(-1000, 1000);
  std::uniform_int_distribution<long long> seeds(0, 1ll << 40);
  for (int i = 0; i < 1000; ++i) {
    if (perlin2(lattice(rng), lattice(rng),
                static_cast<uint64_t>(seeds(rng))) != 0.0) {
      return false;
    }
  }
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      const double ours = perlin2(x / 16.0, y / 16.0, 77);
      if (std::abs(ours - independent_perlin(x / 16.0, y / 16.0, 77)) > 1e-9) {
        return false;
      }
    }
  }
  return true;
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double independent_perlin(double x, double y, uint64_t seed) {
  std::vector<int> p(256);
  for (int i = 0; i < 256; ++i) p[i] = i;
  std::mt19937_64 engine(mix64(seed));
  for (int i = 255; i > 0; --i) {
    std::swap(p[i], p[engine() % static_cast<uint64_t>(i + 1)]);
  }
  const double grads[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                              {1, 1},  {-1, 1}, {1, -1}, {-1, -1}};
  const int xi = static_cast<int>(std::floor(x));
  const int yi = static_cast<int>(std::floor(y));
  const double xf = x - std::floor(x), yf = y - std::floor(y);
  double corner[2][2];
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const int idx = p[(p[(xi + dx) & 255] + ((yi + dy) & 255)) & 255] & 7;
      corner[dy][dx] = grads[idx][0] * (xf - dx) + grads[idx][1] * (yf - dy);
    }
  }
  auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  const double u = fade(xf), v = fade(yf);
  const double top = corner[0][0] + u * (corner[0][1] - corner[0][0]);
  const double bot = corner[1][0] + u * (corner[1][1] - corner[1][0]);
  return top + v * (bot - top);
}

// --- criterion 7: live endpoint smoke (non-gating) --------------------------

// Configuration comes from the environment only:
//   COG_SMOKE_ENDPOINT   chat-completions URL
//   COG_SMOKE_MODEL      model name
//   COG_SMOKE_TOKEN_ENV  NAME of the env var holding the bearer token
int criterion_live_smoke() {  // 1 = pass, 0 = fail, -1 = skip
  const char* endpoint = std::getenv("COG_SMOKE_ENDPOINT");
  if (!endpoint || !*endpoint) return -1;

  BackendDescriptor desc;
  desc.kind = BackendKind::kRemote;
  desc.endpoint_url = endpoint;
  const char* model = std::getenv("COG_SMOKE_MODEL");
  desc.model_name = model ? model : "";
  const char* token_env = std::getenv("COG_SMOKE_TOKEN_ENV");
  desc.auth_token_env = token_env ? token_env : "";
  desc.max_image_edge = 1288;

  try {
    testutil::TempDir dir("acceptance_smoke");
    Manifest manifest;
    manifest.base_dir = dir.path().string();
    manifest.image_root = ".";
    manifest.categories = {"synthetic"};
    // One bright 40x40 square per image, at a per-instance location.
    for (int i = 0; i < 10; ++i) {
      ImageBuffer img = testutil::make_test_image(512, 512);
      const int x = 40 + (i * 41) % 400, y = 40 + (i * 67) % 400;
      for (int py = y; py < y + 40; ++py) {
        for (int px = x; px < x + 40; ++px) {
          uint8_t* p = img.at(px, py);
          p[0] = p[1] = p[2] = 255;
        }
      }
      Instance inst;
      inst.id = "smoke" + std::to_string(i);
      inst.image_path = inst.id + ".png";
      save_png(img, (dir.path() / inst.image_path).string());
      inst.instruction = "the solid white square";
      inst.category = "synthetic";
      inst.target = BBox{x, y, x + 39, y + 39};
      manifest.instances.push_back(std::move(inst));
    }

    BackendMap backends;
    backends["live"] = make_remote_backend(desc);
    PipelineConfig single;
    StepConfig anchor;
    anchor.backend_ref = "live";
    single.steps.push_back(anchor);
    PipelineConfig dual = single;
    StepConfig refine = anchor;
    refine.modality = FeedbackModality::kBoth;
    refine.marker = marker_for_step(2, MarkerProfile::kLarge);
    dual.steps[0].marker = marker_for_step(1, MarkerProfile::kLarge);
    dual.steps.push_back(refine);

    const EvalReport one = evaluate(manifest, single, backends, "single", {2, ""});
    int parsed = 0;
    for (const auto& outcome : one.outcomes) {
      if (outcome.predicted.has_value()) ++parsed;
    }
    const std::string rendered = render_report(one, ReportFormat::kMarkdownTable);
    if (parsed < 8 || rendered.empty()) return 0;

    const EvalReport two = evaluate(manifest, dual, backends, "dual", {2, ""});
    std::cout << "  live smoke: single-step " << one.overall.accuracy
              << ", dual-step " << two.overall.accuracy
              << " (directional trend logged, not asserted)\n";
    return 1;
  } catch (const std::exception& e) {
    std::cout << "  live smoke error: " << e.what() << "\n";
    return 0;
  }
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*check)();
  };
  const Criterion criteria[] = {
      {"marker rasterization matches brute-force footprints", criterion_marker_oracle},
      {"published accuracy rows recombine under instance weighting", criterion_aggregation_rows},
      {"triple-step trace fidelity and determinism", criterion_trace_fidelity},
      {"oracle end-to-end evaluation", criterion_oracle_end_to_end},
      {"reply parser robustness", criterion_parser_robustness},
      {"degradation determinism and label transport", criterion_degradation},
  };

  bool all_pass = true;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    bool pass = false;
    try {
      pass = c.check();
    } catch (const std::exception& e) {
      std::cout << "criterion " << index << " threw: " << e.what() << "\n";
    }
    std::cout << "criterion " << index << " " << (pass ? "PASS" : "FAIL")
              << ": " << c.name << "\n";
    all_pass = all_pass && pass;
  }

  const int smoke = criterion_live_smoke();
  std::cout << "criterion 7 "
            << (smoke < 0 ? "SKIP" : smoke ? "PASS" : "FAIL")
            << ": live endpoint smoke (non-gating"
            << (smoke < 0 ? "; set COG_SMOKE_ENDPOINT to enable)" : ")")
            << "\n";

  return all_pass ? 0 : 1;
}
