#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "cog/dataset.hpp"
#include "cog/degrade.hpp"
#include "cog/digest.hpp"
#include "cog/evaluator.hpp"
#include "cog/image.hpp"
#include "cog/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
  }
  fs::rename(tmp, path);
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const json& inputs, const std::string& started,
                        const json& digests) {
  json doc = {{"command", command},
              {"inputs", inputs},
              {"digests", digests},
              {"started", started},
              {"finished", now_iso8601()},
              {"tool_version", kToolVersion}};
  write_atomic(out_dir / "run_manifest.json", doc.dump(2) + "\n");
}

void write_failure_marker(const fs::path& out_dir, const std::string& message) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream out(out_dir / "FAILED", std::ios::binary);
  out << message << "\n";
}

// Config-depth truncation and marker/modality overrides shared by ground/eval.
struct PipelineOverrides {
  int steps = 0;  // 0 = keep config depth
  std::string marker_profile;
  std::string modality;
};

void apply_overrides(cog::LoadedPipeline& loaded, const PipelineOverrides& ov) {
  if (ov.steps > 0 &&
      static_cast<size_t>(ov.steps) < loaded.config.steps.size()) {
    loaded.config.steps.resize(ov.steps);
  }
  if (!ov.marker_profile.empty()) {
    const auto profile = ov.marker_profile == "small"
                             ? cog::MarkerProfile::kSmall
                             : cog::MarkerProfile::kLarge;
    for (size_t i = 0; i < loaded.config.steps.size(); ++i) {
      loaded.config.steps[i].marker =
          cog::marker_for_step(static_cast<int>(i + 1), profile);
    }
  }
  if (!ov.modality.empty()) {
    cog::FeedbackModality m;
    if (ov.modality == "text") m = cog::FeedbackModality::kText;
    else if (ov.modality == "image") m = cog::FeedbackModality::kImage;
    else m = cog::FeedbackModality::kBoth;
    for (size_t i = 1; i < loaded.config.steps.size(); ++i) {
      loaded.config.steps[i].modality = m;
    }
  }
  loaded.digest = cog::pipeline_config_digest(loaded.config, loaded.descriptors);
}

int cmd_ground(const std::string& image_path, const std::string& instruction,
               const std::string& config_path, const std::string& out_dir,
               const PipelineOverrides& overrides) {
  const std::string started = now_iso8601();
  cog::LoadedPipeline loaded;
  cog::ImageBuffer image;
  try {
    loaded = cog::load_pipeline_config(config_path);
    apply_overrides(loaded, overrides);
    image = cog::load_image(image_path);
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const json inputs = {{"image", image_path},
                       {"instruction", instruction},
                       {"config", config_path}};
  try {
    cog::PipelineRun run = cog::run_pipeline(loaded.config, loaded.backends,
                                             image, instruction, "cli");
    run.trace.config_digest = loaded.digest;
    cog::persist_trace(run.trace, run.step_images, out_dir);
    write_run_manifest(out_dir, "ground", inputs, started,
                       {{"config", loaded.digest}});
    std::cout << "(" << run.final_point.x << ", " << run.final_point.y << ")\n";
    return 0;
  } catch (const cog::PipelineError& e) {
    cog::Trace trace = e.trace;
    trace.config_digest = loaded.digest;
    cog::persist_trace(trace, {}, out_dir);
    write_failure_marker(out_dir, e.what());
    std::cerr << "pipeline error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_eval(const std::string& manifest_path, const std::string& config_path,
             int parallelism, const std::string& out_dir,
             const PipelineOverrides& overrides) {
  const std::string started = now_iso8601();
  cog::Manifest manifest;
  cog::LoadedPipeline loaded;
  try {
    manifest = cog::load_manifest(manifest_path);
    loaded = cog::load_pipeline_config(config_path);
    apply_overrides(loaded, overrides);
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    cog::EvalOptions options;
    options.parallelism = parallelism;
    options.trace_dir = (fs::path(out_dir) / "traces").string();
    const cog::EvalReport report = cog::evaluate(manifest, loaded.config,
                                                 loaded.backends, loaded.digest,
                                                 options);
    write_atomic(fs::path(out_dir) / "report.md",
                 cog::render_report(report, cog::ReportFormat::kMarkdownTable));
    write_atomic(fs::path(out_dir) / "report.csv",
                 cog::render_report(report, cog::ReportFormat::kCsv));
    write_atomic(fs::path(out_dir) / "outcomes.jsonl",
                 cog::render_report(report, cog::ReportFormat::kJsonl));
    write_run_manifest(out_dir, "eval",
                       {{"manifest", manifest_path}, {"config", config_path}},
                       started, {{"config", loaded.digest}});
    std::cout.setf(std::ios::fixed);
    std::cout.precision(1);
    std::cout << "overall: " << report.overall.accuracy << "\n";
    return 0;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_degrade(const std::string& manifest_path, uint64_t seed, double severity,
                const std::string& stages_arg, const std::string& out_dir,
                int parallelism) {
  const std::string started = now_iso8601();
  cog::Manifest manifest;
  std::vector<cog::DegradeStage> stages;
  try {
    manifest = cog::load_manifest(manifest_path);
    if (stages_arg == "all") {
      stages = cog::all_degrade_stages();
    } else {
      std::string rest = stages_arg;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string name = rest.substr(0, comma);
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        if (name.empty()) continue;
        const auto stage = cog::stage_from_name(name);
        if (!stage) {
          std::string catalog;
          for (const auto s : cog::all_degrade_stages()) {
            if (!catalog.empty()) catalog += ", ";
            catalog += cog::stage_name(s);
          }
          std::cerr << "error: unknown stage \"" << name
                    << "\"; available stages: " << catalog << "\n";
          return 1;
        }
        stages.push_back(*stage);
      }
    }
    if (severity > 0 && stages.empty()) {
      std::cerr << "error: severity > 0 requires at least one stage\n";
      return 1;
    }
    fs::create_directories(fs::path(out_dir) / "images");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const size_t n = manifest.instances.size();
    std::vector<std::string> provenance(n);
    std::vector<cog::TargetSpec> new_targets(n);
    std::vector<std::string> errors(n);
    std::atomic<size_t> next{0};

    auto worker = [&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        const cog::Instance& inst = manifest.instances[i];
        try {
          const std::string src = cog::resolve_image_path(manifest, inst);
          const fs::path dst =
              fs::path(out_dir) / "images" / (inst.id + "_degraded.png");
          if (severity == 0) {
            // Byte-identity contract: copy the original file verbatim.
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
            json prov = {{"seed", cog::derive_instance_seed(seed, inst.id)},
                         {"severity", 0.0},
                         {"stages", json::array()}};
            provenance[i] = prov.dump();
            new_targets[i] = inst.target;
            continue;
          }
          cog::DegradeConfig config;
          config.seed = cog::derive_instance_seed(seed, inst.id);
          config.severity = severity;
          config.stages = stages;
          const cog::ImageBuffer image = cog::load_image(src);
          cog::DegradeResult result =
              cog::degrade_instance(image, inst.target, config);
          cog::save_png(result.image, dst.string());
          provenance[i] = std::move(result.provenance);
          new_targets[i] = result.target;
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    const int workers = static_cast<int>(
        std::min<size_t>(static_cast<size_t>(std::max(parallelism, 1)), n));
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    for (size_t i = 0; i < n; ++i) {
      if (!errors[i].empty()) {
        throw std::runtime_error("instance " + manifest.instances[i].id + ": " +
                                 errors[i]);
      }
    }

    cog::Manifest derived;
    derived.schema_version = manifest.schema_version;
    derived.image_root = "images";
    derived.default_point_tolerance = manifest.default_point_tolerance;
    derived.categories = manifest.categories;
    std::string sidecar;
    for (size_t i = 0; i < n; ++i) {
      const cog::Instance& inst = manifest.instances[i];
      cog::Instance degraded = inst;
      degraded.id = inst.id + "_degraded";
      degraded.image_path = inst.id + "_degraded.png";
      degraded.target = new_targets[i];
      degraded.variant_of = inst.id;
      derived.instances.push_back(std::move(degraded));
      json record = json::parse(provenance[i]);
      record["instance_id"] = inst.id + "_degraded";
      record["variant_of"] = inst.id;
      sidecar += record.dump() + "\n";
    }
    cog::save_manifest(derived, (fs::path(out_dir) / "manifest.json").string());
    write_atomic(fs::path(out_dir) / "provenance.jsonl", sidecar);
    write_run_manifest(out_dir, "degrade",
                       {{"manifest", manifest_path},
                        {"seed", seed},
                        {"severity", severity},
                        {"stages", stages_arg}},
                       started, json::object());
    std::cout << "degraded " << n << " instances\n";
    return 0;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative GUI-grounding engine and evaluation harness"};
  app.require_subcommand(1);

  PipelineOverrides overrides;

  auto* ground = app.add_subcommand("ground", "Ground one instruction on one screenshot");
  std::string image_path, instruction, config_path, out_dir;
  ground->add_option("--image", image_path, "Screenshot path")->required();
  ground->add_option("--instruction", instruction, "Element instruction")->required();
  ground->add_option("--config", config_path, "Pipeline config path")->required();
  ground->add_option("--out", out_dir, "Output/trace directory")->required();
  ground->add_option("--steps", overrides.steps, "Truncate pipeline depth");
  ground->add_option("--marker-profile", overrides.marker_profile, "large|small")
      ->check(CLI::IsMember({"large", "small"}));
  ground->add_option("--modality", overrides.modality, "text|image|both")
      ->check(CLI::IsMember({"text", "image", "both"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a pipeline over a manifest");
  std::string manifest_path;
  int parallelism = 1;
  eval->add_option("--manifest", manifest_path, "Benchmark manifest")->required();
  eval->add_option("--config", config_path, "Pipeline config path")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_option("--parallelism", parallelism, "Concurrent instance runs")
      ->check(CLI::PositiveNumber);
  eval->add_option("--steps", overrides.steps, "Truncate pipeline depth");
  eval->add_option("--marker-profile", overrides.marker_profile, "large|small")
      ->check(CLI::IsMember({"large", "small"}));
  eval->add_option("--modality", overrides.modality, "text|image|both")
      ->check(CLI::IsMember({"text", "image", "both"}));

  auto* degrade = app.add_subcommand("degrade", "Generate degraded variants of a manifest");
  uint64_t seed = 0;
  double severity = 0.5;
  std::string stages_arg = "all";
  degrade->add_option("--manifest", manifest_path, "Benchmark manifest")->required();
  degrade->add_option("--out", out_dir, "Output directory")->required();
  degrade->add_option("--seed", seed, "Base seed");
  degrade->add_option("--severity", severity, "Severity in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  degrade->add_option("--stages", stages_arg, "Comma-separated stage list or \"all\"");
  degrade->add_option("--parallelism", parallelism, "Concurrent instances")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (ground->parsed()) {
    return cmd_ground(image_path, instruction, config_path, out_dir, overrides);
  }
  if (eval->parsed()) {
    return cmd_eval(manifest_path, config_path, parallelism, out_dir, overrides);
  }
  return cmd_degrade(manifest_path, seed, severity, stages_arg, out_dir,
                     parallelism);
}
