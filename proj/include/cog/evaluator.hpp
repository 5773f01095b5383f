#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cog/core.hpp"
#include "cog/dataset.hpp"
#include "cog/pipeline.hpp"

namespace cog {

struct InstanceOutcome {
  std::string instance_id;
  std::optional<Point> predicted;
  bool hit = false;  // false whenever predicted is absent
  std::string trace_path;
  std::string error;  // diagnostic when the pipeline failed, else empty
};

struct CategoryStats {
  int hits = 0;
  int total = 0;
  double accuracy = 0;  // percent, 1 decimal
};

struct EvalReport {
  std::string config_digest;
  std::map<std::string, CategoryStats> per_category;
  CategoryStats overall;
  std::vector<InstanceOutcome> outcomes;  // ordered by instance id
  std::string tolerance_note;
};

// Percent accuracy rounded half away from zero to 1 decimal.
double accuracy_percent(int hits, int total);

// Instance-weighted average of per-category accuracies: sum(acc_i * n_i) / sum(n_i),
// reported to 1 decimal. Throws on an empty list.
double weighted_average(const std::vector<std::pair<double, int>>& per_category);

struct EvalOptions {
  int parallelism = 1;
  std::string trace_dir;  // when set, per-instance trace directories go here
};

// Runs the pipeline over every instance under a bounded worker pool. Pipeline
// errors become hit=false outcomes with diagnostics and never abort the run;
// the report is a deterministic reduction independent of scheduling.
EvalReport evaluate(const Manifest& manifest, const PipelineConfig& config,
                    const BackendMap& backends, const std::string& config_digest,
                    const EvalOptions& options);

enum class ReportFormat { kMarkdownTable, kCsv, kJsonl };

std::string render_report(const EvalReport& report, ReportFormat format);

}  // namespace cog
