#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cog/core.hpp"

namespace cog {

struct Manifest {
  int schema_version = 1;
  std::string image_root;  // image paths resolve under this, relative to the manifest file
  double default_point_tolerance = 14.0;  // radius for point targets lacking one
  std::vector<std::string> categories;
  std::vector<Instance> instances;
  std::string base_dir;  // directory of the manifest file; not serialized
};

struct ManifestParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ManifestValidationError : std::runtime_error {
  ManifestValidationError(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), offending_ids(std::move(ids)) {}
  std::vector<std::string> offending_ids;
};

// Fully validated load: duplicate ids, unknown categories, malformed targets
// and (when check_images) dangling image paths are all rejected with
// per-record diagnostics.
Manifest load_manifest(const std::string& path, bool check_images = true);
Manifest parse_manifest(const std::string& json_text, const std::string& base_dir,
                        bool check_images);

std::string serialize_manifest(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::string& path);

// Absolute path of an instance's image.
std::string resolve_image_path(const Manifest& manifest, const Instance& instance);

enum class SplitKey { kCategory, kInteraction };

std::map<std::string, int> split_counts(const Manifest& manifest, SplitKey key);

}  // namespace cog
