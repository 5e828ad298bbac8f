#include "glide/dataset.hpp"

#include <algorithm>

#include "glide/base.hpp"
#include "glide/io.hpp"

namespace glide {

namespace {
using ordered_json = nlohmann::ordered_json;
}

std::string Dataset::manifest_text() const {
  ordered_json j;
  j["format_version"] = 1;
  j["taxonomy"] = taxonomy.to_json();
  j["instances"] = ordered_json::array();
  for (const auto& r : instances) {
    ordered_json ji;
    ji["id"] = r.id;
    ji["scene"] = r.scene;
    ji["image"] = r.image_path;
    ji["mask"] = r.mask_path;
    ji["category"] = r.category;
    ji["values"] = r.values;
    std::vector<int> sup(r.supervised.begin(), r.supervised.end());
    ji["supervised"] = sup;
    ji["provenance"] = r.provenance;
    j["instances"].push_back(std::move(ji));
  }
  return j.dump(2) + "\n";
}

void Dataset::save() const {
  const std::string text = manifest_text();
  write_file_bytes(root + "/manifest.json", text.data(), text.size());
}

Dataset Dataset::load(const std::string& dir) {
  Dataset d;
  d.root = dir;
  auto bytes = read_file_bytes(dir + "/manifest.json");
  ordered_json j;
  try {
    j = ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, "manifest: cannot parse " + dir + "/manifest.json: " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1)
      fail(ErrorCategory::data, "manifest: unsupported format_version");
    d.taxonomy = Taxonomy::from_json(j.at("taxonomy"));
    for (const auto& ji : j.at("instances")) {
      InstanceRecord r;
      r.id = ji.at("id").get<int>();
      r.scene = ji.at("scene").get<int>();
      r.image_path = ji.at("image").get<std::string>();
      r.mask_path = ji.at("mask").get<std::string>();
      r.category = ji.at("category").get<int>();
      r.values = ji.at("values").get<std::vector<double>>();
      auto sup = ji.at("supervised").get<std::vector<int>>();
      r.supervised.assign(sup.begin(), sup.end());
      r.provenance = ji.at("provenance").get<std::string>();
      d.instances.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, std::string("manifest: malformed record: ") + e.what());
  }
  d.validate();
  d.rebuild_scene_index();
  return d;
}

void Dataset::validate() const {
  taxonomy.validate();
  for (const auto& r : instances) {
    if (r.category < 0 || r.category >= taxonomy.num_categories())
      fail(ErrorCategory::data,
           "manifest: instance " + std::to_string(r.id) + " has category " +
               std::to_string(r.category) + " outside the taxonomy");
    const size_t want = static_cast<size_t>(taxonomy.n_c(r.category));
    if (r.values.size() != want || r.supervised.size() != want)
      fail(ErrorCategory::data,
           "manifest: instance " + std::to_string(r.id) + " target length " +
               std::to_string(r.values.size()) + " does not match n_c " + std::to_string(want));
    for (uint8_t s : r.supervised)
      if (s > 1) fail(ErrorCategory::data, "manifest: supervision marks must be 0/1");
    // Multi-valued groups: exactly one positive, or the whole group ignored.
    for (auto [off, len] : taxonomy.category_groups(r.category)) {
      if (len < 2) continue;
      bool sup = r.supervised[off] != 0;
      for (int i = 1; i < len; ++i)
        if ((r.supervised[off + i] != 0) != sup)
          fail(ErrorCategory::data, "manifest: instance " + std::to_string(r.id) +
                                        " has a partially supervised group");
      if (!sup) continue;
      int positives = 0;
      for (int i = 0; i < len; ++i) {
        const double v = r.values[off + i];
        if (v != 0.0 && v != 1.0)
          fail(ErrorCategory::data, "manifest: instance " + std::to_string(r.id) +
                                        " has a non-one-hot group value");
        positives += v == 1.0;
      }
      if (positives != 1)
        fail(ErrorCategory::data, "manifest: instance " + std::to_string(r.id) +
                                      " has a group with " + std::to_string(positives) +
                                      " positives (want exactly 1)");
    }
    if (r.scene < 0) fail(ErrorCategory::data, "manifest: negative scene id");
  }
  // Instance ids unique.
  std::vector<int> ids;
  ids.reserve(instances.size());
  for (const auto& r : instances) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    fail(ErrorCategory::data, "manifest: duplicate instance ids");
}

void Dataset::rebuild_scene_index() {
  scene_instances.clear();
  int max_scene = -1;
  for (const auto& r : instances) max_scene = std::max(max_scene, r.scene);
  scene_instances.resize(max_scene + 1);
  for (size_t i = 0; i < instances.size(); ++i)
    scene_instances[instances[i].scene].push_back(static_cast<int>(i));
}

Tensor<float> Dataset::load_image(const InstanceRecord& r) const {
  Tensor<float> t = read_blob<float>(root + "/" + r.image_path);
  if (t.ndim() != 3 || t.dim(0) != 3)
    fail(ErrorCategory::data, "image blob " + r.image_path + ": want [3,S,S], got " +
                                  shape_str(t.shape));
  return t;
}

Tensor<float> Dataset::load_mask(const InstanceRecord& r) const {
  Tensor<float> t = read_blob<float>(root + "/" + r.mask_path);
  if (t.ndim() != 3 || t.dim(0) != 1)
    fail(ErrorCategory::data, "mask blob " + r.mask_path + ": want [1,S,S], got " +
                                  shape_str(t.shape));
  return t;
}

}  // namespace glide
