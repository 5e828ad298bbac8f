#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glide/taxonomy.hpp"
#include "glide/tensor.hpp"

namespace glide {

// One attribute-prediction sample: a scene image, this instance's binary
// mask, its category, and the encoded attribute targets with per-entry
// supervision marks (0 marks unlabeled/unclear entries, which must stay out
// of losses and metrics entirely).
struct InstanceRecord {
  int id = 0;
  int scene = 0;
  std::string image_path;  // tensor blob, relative to the dataset root
  std::string mask_path;   // tensor blob, relative to the dataset root
  int category = 0;
  std::vector<double> values;       // length n_c(category)
  std::vector<uint8_t> supervised;  // same length, 0/1
  std::string provenance;
};

// A dataset directory: manifest.json (taxonomy + instance table) next to the
// tensor blobs it references.
struct Dataset {
  std::string root;
  Taxonomy taxonomy;
  std::vector<InstanceRecord> instances;
  std::vector<std::vector<int>> scene_instances;  // scene id -> instance indices

  static Dataset load(const std::string& dir);
  // Writes manifest.json into `root` (blobs are written by their producers).
  void save() const;

  std::string manifest_text() const;  // canonical serialized manifest

  Tensor<float> load_image(const InstanceRecord& r) const;  // [3,S,S]
  Tensor<float> load_mask(const InstanceRecord& r) const;   // [1,S,S]

  void validate() const;
  void rebuild_scene_index();
};

}  // namespace glide
