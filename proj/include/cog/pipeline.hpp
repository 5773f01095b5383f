#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cog/core.hpp"
#include "cog/image.hpp"
#include "cog/marker.hpp"
#include "cog/model_client.hpp"

namespace cog {

enum class FeedbackModality { kNone, kText, kImage, kBoth };

struct StepConfig {
  std::string backend_ref;
  FeedbackModality modality = FeedbackModality::kNone;  // step 1 must be kNone
  MarkerSpec marker;  // applied to this step's OUTPUT when later steps mark it
  std::string prompt_template;  // placeholders: {instruction} {history} {step_index}
};

struct PipelineConfig {
  std::vector<StepConfig> steps;
  double adaptive_stop_epsilon = 0;  // 0 = fixed depth (canonical mode)
  bool cumulative_markers = true;
  bool narrowing_baseline = false;   // comparison mode only: crop instead of mark
};

struct StepRecord {
  int step_index = 0;
  std::string prompt_text;
  std::string step_image_digest;
  std::string raw_reply;
  std::optional<Point> parsed_point;  // present iff parse_ok
  bool parse_ok = false;
  double latency_ms = 0;
  std::string error;  // backend/parse diagnostic, empty on success
};

struct Trace {
  std::string instance_id;
  std::string config_digest;
  std::vector<StepRecord> records;
  Point final_point;
  bool stopped_early = false;
  bool degraded = false;  // a refinement step failed; prior point carried forward
};

struct PipelineError : std::runtime_error {
  PipelineError(const std::string& what, Trace t)
      : std::runtime_error(what), trace(std::move(t)) {}
  Trace trace;
};

using BackendMap = std::map<std::string, std::shared_ptr<GroundingBackend>>;

struct PipelineRun {
  Point final_point;
  Trace trace;
  std::vector<ImageBuffer> step_images;  // input image of each executed step
};

// Instantiates a step's prompt template. history holds the parsed points of
// steps 1..step_index-1; markers describes how each was drawn (used for the
// legend under image feedback). The result always restates the instruction
// and demands exactly one coordinate pair.
std::string build_prompt(const std::string& prompt_template, int step_index,
                         const std::string& instruction,
                         std::span<const Point> history,
                         std::span<const MarkerSpec> markers,
                         FeedbackModality modality);

// Always starts from the original full screenshot, never a crop. Renders
// markers for every prior step (cumulative) or only the most recent.
ImageBuffer prepare_step_image(const ImageBuffer& original,
                               std::span<const Point> history,
                               std::span<const MarkerSpec> per_step_markers,
                               bool cumulative);

// Runs the full chain: anchor, then refinement steps with reference feedback.
// Throws PipelineError (carrying the partial trace) when the anchor step
// fails or no step parses; a failing refinement step degrades to the last
// successful point instead.
PipelineRun run_pipeline(const PipelineConfig& config, const BackendMap& backends,
                         const ImageBuffer& image, const std::string& instruction,
                         const std::string& instance_id);

// Canonical JSON serialization of a config (with backend descriptors); the
// config digest is the SHA-256 of this string.
std::string serialize_pipeline_config(const PipelineConfig& config,
                                      const std::map<std::string, BackendDescriptor>& backends);
std::string pipeline_config_digest(const PipelineConfig& config,
                                   const std::map<std::string, BackendDescriptor>& backends);

struct LoadedPipeline {
  PipelineConfig config;
  std::map<std::string, BackendDescriptor> descriptors;
  BackendMap backends;
  std::string digest;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses and validates a pipeline config document. Placeholder and modality
// errors surface here, at load time, not at call time.
LoadedPipeline load_pipeline_config(const std::string& path);
LoadedPipeline parse_pipeline_config(const std::string& json_text);

// Writes trace.jsonl (one StepRecord per line) plus step_<k>.png per step.
void persist_trace(const Trace& trace, std::span<const ImageBuffer> step_images,
                   const std::string& dir);

}  // namespace cog
