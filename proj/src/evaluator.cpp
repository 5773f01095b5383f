#include "cog/evaluator.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "cog/image.hpp"

namespace cog {

namespace {

using nlohmann::json;

double round1(double v) { return std::llround(v * 10.0) / 10.0; }

std::string format1(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << v;
  return out.str();
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

}  // namespace

double accuracy_percent(int hits, int total) {
  if (total <= 0) return 0;
  return round1(100.0 * hits / total);
}

double weighted_average(const std::vector<std::pair<double, int>>& per_category) {
  if (per_category.empty()) {
    throw std::invalid_argument("weighted_average: empty category list");
  }
  double weighted_sum = 0;
  long long total = 0;
  for (const auto& [accuracy, count] : per_category) {
    if (count <= 0) {
      throw std::invalid_argument("weighted_average: counts must be positive");
    }
    weighted_sum += accuracy * count;
    total += count;
  }
  return round1(weighted_sum / total);
}

EvalReport evaluate(const Manifest& manifest, const PipelineConfig& config,
                    const BackendMap& backends, const std::string& config_digest,
                    const EvalOptions& options) {
  if (manifest.instances.empty()) {
    throw std::invalid_argument("evaluate: empty manifest");
  }
  if (options.parallelism < 1) {
    throw std::invalid_argument("evaluate: parallelism must be >= 1");
  }

  const size_t n = manifest.instances.size();
  std::vector<InstanceOutcome> outcomes(n);
  std::atomic<size_t> next{0};

  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      const Instance& inst = manifest.instances[i];
      InstanceOutcome& outcome = outcomes[i];
      outcome.instance_id = inst.id;
      try {
        const ImageBuffer image =
            load_image(resolve_image_path(manifest, inst));
        PipelineRun run = run_pipeline(config, backends, image,
                                       inst.instruction, inst.id);
        run.trace.config_digest = config_digest;
        outcome.predicted = run.final_point;
        outcome.hit = hit_test(run.final_point, inst.target);
        if (!options.trace_dir.empty()) {
          const auto dir =
              (std::filesystem::path(options.trace_dir) / inst.id).string();
          persist_trace(run.trace, run.step_images, dir);
          outcome.trace_path = dir;
        }
      } catch (const PipelineError& e) {
        outcome.error = e.what();
        if (!options.trace_dir.empty()) {
          const auto dir =
              (std::filesystem::path(options.trace_dir) / inst.id).string();
          persist_trace(e.trace, {}, dir);
          outcome.trace_path = dir;
        }
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
    }
  };

  const int workers = static_cast<int>(
      std::min<size_t>(static_cast<size_t>(options.parallelism), n));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic reduction: outcomes ordered by instance id regardless of
  // completion order.
  std::sort(outcomes.begin(), outcomes.end(),
            [](const InstanceOutcome& a, const InstanceOutcome& b) {
              return a.instance_id < b.instance_id;
            });

  EvalReport report;
  report.config_digest = config_digest;
  report.tolerance_note = "default_point_tolerance=" +
                          format1(manifest.default_point_tolerance) + "px";
  std::map<std::string, std::string> category_of;
  for (const Instance& inst : manifest.instances) {
    category_of[inst.id] = inst.category;
  }
  for (const InstanceOutcome& outcome : outcomes) {
    CategoryStats& stats = report.per_category[category_of[outcome.instance_id]];
    ++stats.total;
    ++report.overall.total;
    if (outcome.hit) {
      ++stats.hits;
      ++report.overall.hits;
    }
  }
  for (auto& [_, stats] : report.per_category) {
    stats.accuracy = accuracy_percent(stats.hits, stats.total);
  }
  report.overall.accuracy =
      accuracy_percent(report.overall.hits, report.overall.total);
  report.outcomes = std::move(outcomes);
  return report;
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kMarkdownTable: {
      std::string out;
      out += "Config digest: " + report.config_digest + "\n";
      out += "Tolerance: " + report.tolerance_note + "\n\n";
      std::string header = "| Config |";
      std::string rule = "| --- |";
      std::string row = "| " + report.config_digest.substr(0, 12) + " |";
      for (const auto& [category, stats] : report.per_category) {
        header += " " + category + " |";
        rule += " --- |";
        row += " " + format1(stats.accuracy) + " |";
      }
      header += " Avg |";
      rule += " --- |";
      row += " " + format1(report.overall.accuracy) + " |";
      out += header + "\n" + rule + "\n" + row + "\n";
      return out;
    }
    case ReportFormat::kCsv: {
      std::string out = "config_digest,tolerance";
      for (const auto& [category, _] : report.per_category) {
        out += "," + csv_quote(category);
      }
      out += ",Avg\r\n";
      out += csv_quote(report.config_digest) + "," +
             csv_quote(report.tolerance_note);
      for (const auto& [_, stats] : report.per_category) {
        out += "," + format1(stats.accuracy);
      }
      out += "," + format1(report.overall.accuracy) + "\r\n";
      return out;
    }
    case ReportFormat::kJsonl: {
      std::string out;
      for (const InstanceOutcome& outcome : report.outcomes) {
        json line = {{"instance_id", outcome.instance_id},
                     {"hit", outcome.hit},
                     {"trace_path", outcome.trace_path},
                     {"error", outcome.error}};
        if (outcome.predicted) {
          line["predicted"] = {outcome.predicted->x, outcome.predicted->y};
        }
        out += line.dump() + "\n";
      }
      return out;
    }
  }
  return {};
}

}  // namespace cog
