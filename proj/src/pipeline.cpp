#include "cog/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cog/digest.hpp"

namespace cog {

namespace {

using nlohmann::json;

std::string replace_all_copy(std::string text, const std::string& from,
                             const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::string format_point(const Point& p) {
  return "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
}

std::string ordinal_word(size_t i) {
  return "attempt " + std::to_string(i + 1);
}

constexpr const char* kAnchorTemplate =
    "{instruction}\n\n"
    "Locate the interface element described above in the screenshot. "
    "Respond with exactly one coordinate pair in the form (x, y).";

constexpr const char* kRefineTemplate =
    "{instruction}\n\n"
    "{history}\n"
    "Re-examine the screenshot and refine the location of the element "
    "described above. Respond with exactly one coordinate pair in the form "
    "(x, y).";

std::string default_template(FeedbackModality modality) {
  return modality == FeedbackModality::kNone ? kAnchorTemplate : kRefineTemplate;
}

struct CropWindow {
  int x = 0, y = 0, w = 0, h = 0;
};

// Fixed 0.5-per-axis crop around the previous prediction, clamped in-bounds.
CropWindow narrowing_window(const ImageBuffer& image, const Point& center) {
  CropWindow win;
  win.w = std::max(1, round_half_away(image.width() * 0.5));
  win.h = std::max(1, round_half_away(image.height() * 0.5));
  win.x = std::clamp(center.x - win.w / 2, 0, image.width() - win.w);
  win.y = std::clamp(center.y - win.h / 2, 0, image.height() - win.h);
  return win;
}

ImageBuffer crop(const ImageBuffer& image, const CropWindow& win) {
  ImageBuffer out(win.w, win.h);
  for (int y = 0; y < win.h; ++y) {
    std::copy_n(image.at(win.x, win.y + y), static_cast<size_t>(win.w) * 3,
                out.at(0, y));
  }
  return out;
}

}  // namespace

std::string build_prompt(const std::string& prompt_template, int step_index,
                         const std::string& instruction,
                         std::span<const Point> history,
                         std::span<const MarkerSpec> markers,
                         FeedbackModality modality) {
  std::string history_block;
  if (modality == FeedbackModality::kText || modality == FeedbackModality::kBoth) {
    for (size_t i = 0; i < history.size(); ++i) {
      history_block += "Previous prediction " + std::to_string(i + 1) + ": " +
                       format_point(history[i]) + "\n";
    }
  }
  if (modality == FeedbackModality::kImage || modality == FeedbackModality::kBoth) {
    if (!history.empty()) {
      history_block +=
          "The screenshot is annotated with markers for earlier attempts: ";
      for (size_t i = 0; i < history.size(); ++i) {
        if (i > 0) history_block += i + 1 == history.size() ? " and " : ", ";
        const MarkerSpec spec = i < markers.size() ? markers[i] : MarkerSpec{};
        history_block += "a " + describe_marker(spec) + " denotes " + ordinal_word(i);
      }
      history_block += ".\n";
    }
  }

  const std::string& tmpl =
      prompt_template.empty() ? default_template(modality) : prompt_template;
  std::string out = replace_all_copy(tmpl, "{instruction}", instruction);
  out = replace_all_copy(out, "{history}", history_block);
  out = replace_all_copy(out, "{step_index}", std::to_string(step_index));
  return out;
}

ImageBuffer prepare_step_image(const ImageBuffer& original,
                               std::span<const Point> history,
                               std::span<const MarkerSpec> per_step_markers,
                               bool cumulative) {
  if (history.empty()) return original;
  ImageBuffer out = original;
  const size_t first = cumulative ? 0 : history.size() - 1;
  for (size_t i = first; i < history.size(); ++i) {
    const MarkerSpec spec =
        i < per_step_markers.size() ? per_step_markers[i] : MarkerSpec{};
    out = render_marker(out, spec, history[i]);
  }
  return out;
}

PipelineRun run_pipeline(const PipelineConfig& config, const BackendMap& backends,
                         const ImageBuffer& image, const std::string& instruction,
                         const std::string& instance_id) {
  if (config.steps.empty()) {
    throw PipelineError("pipeline config has no steps", {});
  }
  if (instruction.empty()) {
    throw PipelineError("instruction must be non-empty", {});
  }

  Trace trace;
  trace.instance_id = instance_id;
  std::vector<ImageBuffer> step_images;
  std::vector<Point> history;          // successful predictions so far
  std::vector<MarkerSpec> markers;     // how each was (or will be) marked
  std::optional<Point> last_good;

  const size_t total_steps = config.steps.size();
  for (size_t k = 1; k <= total_steps; ++k) {
    const StepConfig& step = config.steps[k - 1];
    const auto backend_it = backends.find(step.backend_ref);
    if (backend_it == backends.end()) {
      throw PipelineError("unknown backend reference: " + step.backend_ref, trace);
    }
    GroundingBackend& backend = *backend_it->second;

    // Input image for this step. Non-baseline refinement always sees the
    // full original screenshot, marked when the modality asks for it.
    ImageBuffer step_image;
    CropWindow crop_win{0, 0, image.width(), image.height()};
    bool cropped = false;
    if (k == 1) {
      step_image = image;
    } else if (config.narrowing_baseline && last_good) {
      crop_win = narrowing_window(image, *last_good);
      step_image = crop(image, crop_win);
      cropped = true;
    } else if (step.modality == FeedbackModality::kImage ||
               step.modality == FeedbackModality::kBoth) {
      step_image = prepare_step_image(image, history, markers,
                                      config.cumulative_markers);
    } else {
      step_image = image;
    }

    StepRecord record;
    record.step_index = static_cast<int>(k);
    record.step_image_digest = sha256_hex(step_image.pixels());
    record.prompt_text =
        build_prompt(step.prompt_template, static_cast<int>(k), instruction,
                     history, markers, step.modality);

    GroundingQuery query;
    query.image = &step_image;
    query.prompt = record.prompt_text;
    query.meta = {instance_id, static_cast<int>(k)};

    try {
      const RawReply reply = backend.request_grounding(query);
      record.raw_reply = reply.text;
      record.latency_ms = reply.latency_ms;

      const int sent_w = std::max(
          1, round_half_away(step_image.width() / reply.scale_back_x));
      const int sent_h = std::max(
          1, round_half_away(step_image.height() / reply.scale_back_y));
      Point p = parse_point(reply.text, backend.descriptor().convention,
                            sent_w, sent_h);
      if (reply.scale_back_x != 1.0 || reply.scale_back_y != 1.0) {
        p = scale_point(p, reply.scale_back_x, reply.scale_back_y);
      }
      if (cropped) {
        p = {p.x + crop_win.x, p.y + crop_win.y};
      }
      record.parsed_point = p;
      record.parse_ok = true;
    } catch (const PointParseError& e) {
      record.error = std::string("parse error: ") + e.what();
    } catch (const std::exception& e) {
      record.error = std::string("backend error: ") + e.what();
      if (k == 1) {
        trace.records.push_back(std::move(record));
        step_images.push_back(std::move(step_image));
        throw PipelineError("anchor step failed: " + trace.records.back().error,
                            trace);
      }
    }

    trace.records.push_back(record);
    step_images.push_back(std::move(step_image));

    if (record.parse_ok) {
      history.push_back(*record.parsed_point);
      markers.push_back(step.marker);
      const Point prev = last_good.value_or(*record.parsed_point);
      const bool had_prev = last_good.has_value();
      last_good = record.parsed_point;
      if (config.adaptive_stop_epsilon > 0 && had_prev && k < total_steps &&
          distance(prev, *record.parsed_point) <= config.adaptive_stop_epsilon) {
        trace.stopped_early = true;
        break;
      }
    } else {
      trace.degraded = trace.degraded || k > 1;
    }
  }

  if (!last_good) {
    throw PipelineError("no step produced a parsable point", trace);
  }
  trace.final_point = *last_good;

  PipelineRun run;
  run.final_point = *last_good;
  run.trace = std::move(trace);
  run.step_images = std::move(step_images);
  return run;
}

namespace {

json marker_to_json(const MarkerSpec& m) {
  return {{"shape", m.shape == MarkerShape::kDisk ? "disk" : "square"},
          {"size", m.size},
          {"color", {m.color[0], m.color[1], m.color[2]}},
          {"opacity", m.opacity}};
}

std::string modality_name(FeedbackModality m) {
  switch (m) {
    case FeedbackModality::kNone: return "none";
    case FeedbackModality::kText: return "text";
    case FeedbackModality::kImage: return "image";
    case FeedbackModality::kBoth: return "both";
  }
  return "none";
}

std::string convention_name(CoordinateConvention c) {
  switch (c) {
    case CoordinateConvention::kAbsolutePixels: return "absolute_pixels";
    case CoordinateConvention::kNormalizedUnit: return "normalized_unit";
    case CoordinateConvention::kNormalized1000: return "normalized_1000";
  }
  return "absolute_pixels";
}

json descriptor_to_json(const BackendDescriptor& d) {
  return {{"kind", d.kind == BackendKind::kRemote ? "remote" : "scripted"},
          {"endpoint_url", d.endpoint_url},
          {"model_name", d.model_name},
          {"auth_token_env", d.auth_token_env},
          {"convention", convention_name(d.convention)},
          {"max_image_edge", d.max_image_edge},
          {"timeout_seconds", d.timeout_seconds},
          {"max_retries", d.max_retries},
          {"max_concurrent", d.max_concurrent}};
}

}  // namespace

std::string serialize_pipeline_config(
    const PipelineConfig& config,
    const std::map<std::string, BackendDescriptor>& backends) {
  json doc;
  doc["adaptive_stop_epsilon"] = config.adaptive_stop_epsilon;
  doc["cumulative_markers"] = config.cumulative_markers;
  doc["narrowing_baseline"] = config.narrowing_baseline;
  json steps = json::array();
  for (const StepConfig& s : config.steps) {
    steps.push_back({{"backend", s.backend_ref},
                     {"modality", modality_name(s.modality)},
                     {"marker", marker_to_json(s.marker)},
                     {"prompt_template", s.prompt_template}});
  }
  doc["steps"] = std::move(steps);
  json bk;
  for (const auto& [name, d] : backends) bk[name] = descriptor_to_json(d);
  doc["backends"] = std::move(bk);
  return doc.dump();  // nlohmann orders keys, so this is canonical
}

std::string pipeline_config_digest(
    const PipelineConfig& config,
    const std::map<std::string, BackendDescriptor>& backends) {
  return sha256_hex(serialize_pipeline_config(config, backends));
}

namespace {

FeedbackModality modality_from_name(const std::string& name) {
  if (name == "none") return FeedbackModality::kNone;
  if (name == "text") return FeedbackModality::kText;
  if (name == "image") return FeedbackModality::kImage;
  if (name == "both") return FeedbackModality::kBoth;
  throw ConfigError("unknown feedback modality: " + name);
}

CoordinateConvention convention_from_name(const std::string& name) {
  if (name == "absolute_pixels") return CoordinateConvention::kAbsolutePixels;
  if (name == "normalized_unit") return CoordinateConvention::kNormalizedUnit;
  if (name == "normalized_1000") return CoordinateConvention::kNormalized1000;
  throw ConfigError("unknown coordinate convention: " + name);
}

MarkerSpec marker_from_json(const json& j) {
  MarkerSpec m;
  const std::string shape = j.value("shape", "disk");
  if (shape == "disk") m.shape = MarkerShape::kDisk;
  else if (shape == "square") m.shape = MarkerShape::kSquare;
  else throw ConfigError("unknown marker shape: " + shape);
  m.size = j.value("size", 10);
  if (j.contains("color")) {
    const auto& c = j.at("color");
    if (!c.is_array() || c.size() != 3) {
      throw ConfigError("marker color must be an RGB triple");
    }
    for (int i = 0; i < 3; ++i) {
      const int v = c[i].get<int>();
      if (v < 0 || v > 255) throw ConfigError("marker color channel out of range");
      m.color[i] = static_cast<uint8_t>(v);
    }
  }
  m.opacity = j.value("opacity", 1.0);
  if (m.size < 0 || m.opacity <= 0 || m.opacity > 1) {
    throw ConfigError("malformed marker spec");
  }
  return m;
}

Script script_from_json(const json& j) {
  Script script;
  for (const auto& [key, value] : j.items()) {
    const auto sep = key.rfind(':');
    if (sep == std::string::npos) {
      throw ConfigError("script key must be \"<instance_id>:<step>\": " + key);
    }
    script[{key.substr(0, sep), std::stoi(key.substr(sep + 1))}] =
        value.get<std::string>();
  }
  return script;
}

}  // namespace

LoadedPipeline parse_pipeline_config(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw ConfigError("pipeline config is not valid JSON");
  }

  LoadedPipeline loaded;
  const std::string profile_name = doc.value("marker_profile", "large");
  if (profile_name != "large" && profile_name != "small") {
    throw ConfigError("marker_profile must be \"large\" or \"small\"");
  }
  const MarkerProfile profile = profile_name == "large" ? MarkerProfile::kLarge
                                                        : MarkerProfile::kSmall;

  if (!doc.contains("backends") || !doc["backends"].is_object()) {
    throw ConfigError("pipeline config needs a \"backends\" object");
  }
  for (const auto& [name, bj] : doc["backends"].items()) {
    BackendDescriptor d;
    const std::string kind = bj.value("kind", "scripted");
    if (kind == "remote") d.kind = BackendKind::kRemote;
    else if (kind == "scripted") d.kind = BackendKind::kScripted;
    else throw ConfigError("unknown backend kind: " + kind);
    d.endpoint_url = bj.value("endpoint_url", "");
    d.model_name = bj.value("model_name", "");
    d.auth_token_env = bj.value("auth_token_env", "");
    d.convention = convention_from_name(bj.value("convention", "absolute_pixels"));
    d.max_image_edge = bj.value("max_image_edge", 0);
    d.timeout_seconds = bj.value("timeout_seconds", 60.0);
    d.max_retries = bj.value("max_retries", 2);
    d.max_concurrent = bj.value("max_concurrent", 4);
    if (d.kind == BackendKind::kRemote &&
        (d.endpoint_url.empty() || d.model_name.empty())) {
      throw ConfigError("remote backend \"" + name +
                        "\" requires endpoint_url and model_name");
    }
    if (d.max_image_edge < 0) {
      throw ConfigError("max_image_edge must be >= 0");
    }
    loaded.descriptors[name] = d;
    if (d.kind == BackendKind::kRemote) {
      loaded.backends[name] = make_remote_backend(d);
    } else {
      Script script;
      if (bj.contains("script")) script = script_from_json(bj["script"]);
      std::optional<std::string> default_reply;
      if (bj.contains("default_reply")) {
        default_reply = bj["default_reply"].get<std::string>();
      }
      loaded.backends[name] = make_scripted_backend(d, std::move(script),
                                                    std::move(default_reply));
    }
  }

  if (!doc.contains("steps") || !doc["steps"].is_array() || doc["steps"].empty()) {
    throw ConfigError("pipeline config needs a non-empty \"steps\" array");
  }
  int index = 0;
  for (const auto& sj : doc["steps"]) {
    ++index;
    StepConfig step;
    step.backend_ref = sj.value("backend", "");
    if (!loaded.backends.count(step.backend_ref)) {
      throw ConfigError("step " + std::to_string(index) +
                        " references unknown backend \"" + step.backend_ref + "\"");
    }
    step.modality = modality_from_name(
        sj.value("modality", index == 1 ? "none" : "image"));
    if (index == 1 && step.modality != FeedbackModality::kNone) {
      throw ConfigError("step 1 must use feedback modality \"none\"");
    }
    step.marker = sj.contains("marker") ? marker_from_json(sj["marker"])
                                        : marker_for_step(index, profile);
    step.prompt_template = sj.value("prompt_template", "");
    if (!step.prompt_template.empty()) {
      if (step.prompt_template.find("{instruction}") == std::string::npos) {
        throw ConfigError("step " + std::to_string(index) +
                          " template lacks the {instruction} placeholder");
      }
      if (step.modality != FeedbackModality::kNone &&
          step.prompt_template.find("{history}") == std::string::npos) {
        throw ConfigError("step " + std::to_string(index) +
                          " template lacks the {history} placeholder");
      }
    }
    loaded.config.steps.push_back(std::move(step));
  }

  loaded.config.adaptive_stop_epsilon = doc.value("adaptive_stop_epsilon", 0.0);
  if (loaded.config.adaptive_stop_epsilon < 0) {
    throw ConfigError("adaptive_stop_epsilon must be positive when set");
  }
  loaded.config.cumulative_markers = doc.value("cumulative_markers", true);
  loaded.config.narrowing_baseline = doc.value("narrowing_baseline", false);

  loaded.digest = pipeline_config_digest(loaded.config, loaded.descriptors);
  return loaded;
}

LoadedPipeline load_pipeline_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read pipeline config: " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_pipeline_config(text);
}

void persist_trace(const Trace& trace, std::span<const ImageBuffer> step_images,
                   const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::ofstream out(fs::path(dir) / "trace.jsonl", std::ios::binary);
  for (const StepRecord& r : trace.records) {
    json line = {{"step_index", r.step_index},
                 {"prompt_text", r.prompt_text},
                 {"step_image_digest", r.step_image_digest},
                 {"raw_reply", r.raw_reply},
                 {"parse_ok", r.parse_ok},
                 {"latency_ms", r.latency_ms},
                 {"error", r.error}};
    if (r.parsed_point) {
      line["parsed_point"] = {r.parsed_point->x, r.parsed_point->y};
    }
    out << line.dump() << "\n";
  }
  out.close();

  json meta = {{"instance_id", trace.instance_id},
               {"config_digest", trace.config_digest},
               {"final_point", {trace.final_point.x, trace.final_point.y}},
               {"stopped_early", trace.stopped_early},
               {"degraded", trace.degraded}};
  std::ofstream meta_out(fs::path(dir) / "trace_meta.json", std::ios::binary);
  meta_out << meta.dump(2) << "\n";

  for (size_t i = 0; i < step_images.size(); ++i) {
    save_png(step_images[i],
             (fs::path(dir) / ("step_" + std::to_string(i + 1) + ".png")).string());
  }
}

}  // namespace cog
