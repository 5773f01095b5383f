#include "cog/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace cog {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json target_to_json(const TargetSpec& target) {
  if (const auto* box = std::get_if<BBox>(&target)) {
    return {{"box", {box->x1, box->y1, box->x2, box->y2}}};
  }
  const auto& pt = std::get<PointTolerance>(target);
  return {{"point", {pt.center.x, pt.center.y}}, {"radius", pt.radius}};
}

TargetSpec target_from_json(const json& j, double default_tolerance,
                            std::string* problem) {
  if (j.contains("box")) {
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 4) {
      *problem = "box must be [x1, y1, x2, y2]";
      return BBox{};
    }
    BBox box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    if (!box.valid()) {
      *problem = "box requires x1 <= x2 and y1 <= y2";
    }
    return box;
  }
  if (j.contains("point")) {
    const auto& p = j.at("point");
    if (!p.is_array() || p.size() != 2) {
      *problem = "point must be [x, y]";
      return PointTolerance{};
    }
    PointTolerance pt;
    pt.center = {p[0].get<int>(), p[1].get<int>()};
    pt.radius = j.value("radius", default_tolerance);
    if (!(pt.radius > 0)) {
      *problem = "point tolerance radius must be positive";
    }
    return pt;
  }
  *problem = "target must contain \"box\" or \"point\"";
  return BBox{};
}

}  // namespace

Manifest parse_manifest(const std::string& json_text, const std::string& base_dir,
                        bool check_images) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ManifestParseError("manifest is not a JSON object");
  }

  Manifest m;
  m.base_dir = base_dir;
  m.schema_version = doc.value("schema_version", 1);
  m.image_root = doc.value("image_root", ".");
  m.default_point_tolerance = doc.value("default_point_tolerance", 14.0);
  if (doc.contains("categories")) {
    m.categories = doc["categories"].get<std::vector<std::string>>();
  }

  if (!doc.contains("instances") || !doc["instances"].is_array()) {
    throw ManifestParseError("manifest needs an \"instances\" array");
  }

  std::vector<std::string> problems;
  std::vector<std::string> offenders;
  std::set<std::string> seen_ids;
  const std::set<std::string> vocabulary(m.categories.begin(), m.categories.end());

  auto flag = [&](const std::string& id, const std::string& why) {
    problems.push_back(id + ": " + why);
    offenders.push_back(id);
  };

  for (const auto& ij : doc["instances"]) {
    Instance inst;
    inst.id = ij.value("id", "");
    if (inst.id.empty()) {
      flag("<missing id>", "instance lacks an id");
      continue;
    }
    if (!seen_ids.insert(inst.id).second) {
      flag(inst.id, "duplicate id");
      continue;
    }
    inst.image_path = ij.value("image", "");
    inst.instruction = ij.value("instruction", "");
    inst.category = ij.value("category", "");
    inst.interaction = ij.value("interaction", "");
    if (ij.contains("variant_of")) {
      inst.variant_of = ij["variant_of"].get<std::string>();
    }

    if (inst.instruction.empty()) flag(inst.id, "instruction must be non-empty");
    if (inst.image_path.empty()) flag(inst.id, "image path missing");
    if (!vocabulary.empty() && !vocabulary.count(inst.category)) {
      flag(inst.id, "category \"" + inst.category + "\" not in vocabulary");
    }
    if (!ij.contains("target")) {
      flag(inst.id, "target missing");
    } else {
      std::string problem;
      inst.target =
          target_from_json(ij["target"], m.default_point_tolerance, &problem);
      if (!problem.empty()) flag(inst.id, problem);
    }
    m.instances.push_back(std::move(inst));
  }

  // Auto-derive the vocabulary when the manifest omits it.
  if (m.categories.empty()) {
    std::set<std::string> derived;
    for (const auto& inst : m.instances) derived.insert(inst.category);
    m.categories.assign(derived.begin(), derived.end());
  }

  if (check_images) {
    for (const auto& inst : m.instances) {
      if (inst.image_path.empty()) continue;
      const fs::path full = fs::path(base_dir) / m.image_root / inst.image_path;
      if (!fs::exists(full)) {
        flag(inst.id, "image not found: " + full.string());
      }
    }
  }

  if (!problems.empty()) {
    std::string what = "manifest validation failed:";
    for (const auto& p : problems) what += "\n  " + p;
    throw ManifestValidationError(what, offenders);
  }
  return m;
}

Manifest load_manifest(const std::string& path, bool check_images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ManifestParseError("cannot read manifest: " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_manifest(text, fs::path(path).parent_path().string(), check_images);
}

std::string serialize_manifest(const Manifest& manifest) {
  json doc;
  doc["schema_version"] = manifest.schema_version;
  doc["image_root"] = manifest.image_root;
  doc["default_point_tolerance"] = manifest.default_point_tolerance;
  doc["categories"] = manifest.categories;
  json instances = json::array();
  for (const Instance& inst : manifest.instances) {
    json ij = {{"id", inst.id},
               {"image", inst.image_path},
               {"instruction", inst.instruction},
               {"target", target_to_json(inst.target)},
               {"category", inst.category}};
    if (!inst.interaction.empty()) ij["interaction"] = inst.interaction;
    if (inst.variant_of) ij["variant_of"] = *inst.variant_of;
    instances.push_back(std::move(ij));
  }
  doc["instances"] = std::move(instances);
  return doc.dump(2) + "\n";
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write manifest: " + path);
  }
  out << serialize_manifest(manifest);
}

std::string resolve_image_path(const Manifest& manifest, const Instance& instance) {
  return (fs::path(manifest.base_dir) / manifest.image_root / instance.image_path)
      .string();
}

std::map<std::string, int> split_counts(const Manifest& manifest, SplitKey key) {
  std::map<std::string, int> counts;
  for (const Instance& inst : manifest.instances) {
    const std::string& label =
        key == SplitKey::kCategory ? inst.category : inst.interaction;
    ++counts[label];
  }
  return counts;
}

}  // namespace cog
