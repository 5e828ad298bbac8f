#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glide/config.hpp"
#include "glide/dataset.hpp"
#include "glide/taxonomy.hpp"
#include "glide/tensor.hpp"

namespace glide {

// In-memory generation request for one dataset split. Scenes are 224x224
// with min_objects..max_objects anti-aliased shapes on a muted textured
// background; every label is computed analytically from the render plan and
// per-instance masks are exact pixel-center rasterizations. The on-disk spec
// file is GeneratorSpec (config.hpp), which expands to one request per split
// via gen_request().
struct GenSpec {
  int image_size = 224;  // the renderer's geometry is calibrated to 224
  std::vector<std::pair<std::string, int>> counts;  // category name -> instances
  int min_objects = 1;
  int max_objects = 5;
  double min_visibility = 0.4;         // modal/amodal area floor per instance
  double unclear_rate = 0.10;          // chance one attribute group is unmarked
  double min_occluded_fraction = 0.0;  // required share of occluded instances

  void validate() const;
};

// Expands the on-disk generator spec into the render request for one split
// (`counts` is spec.train_counts or spec.val_counts).
GenSpec gen_request(const GeneratorSpec& spec,
                    const std::vector<std::pair<std::string, int>>& counts);

// The fixed synthetic taxonomy: block/disk/pole/strip with color (8 values),
// relative_size {not_largest, largest}, occluded {no, yes}, and orientation
// {north, east, south, west} on pole and strip only.
Taxonomy synthetic_taxonomy();

// The 8 saturated fill colors, indexed like the color attribute's values.
const std::array<std::array<float, 3>, 8>& synthetic_palette();

// One rendered scene with its analytic ground truth. `full_mask` is the
// pre-occlusion rasterization; `modal_mask` subtracts every later-drawn
// object and is what instances store on disk. Objects keep draw (z) order.
struct SceneRender {
  Tensor<float> image;  // [3,S,S], values in [0,1]
  std::vector<Tensor<float>> full_mask;   // each [1,S,S], binary
  std::vector<Tensor<float>> modal_mask;  // each [1,S,S], binary
  std::vector<int> category;
  std::vector<std::vector<double>> values;       // encoded targets, length n_c
  std::vector<std::vector<uint8_t>> supervised;  // group-level unclear marks
};

// Renders scene `scene_index` of a generation run deterministically from
// (spec, seed, scene_index, categories). Layouts violating the 40% minimum
// visibility are rejected and resampled internally.
SceneRender render_scene(const GenSpec& spec, uint64_t seed, int scene_index,
                         const std::vector<int>& categories);

// Generates the full dataset under `out_dir` (manifest.json + blobs/) and
// returns the in-memory handle. Byte-identical for identical (spec, seed).
Dataset generate_synthetic(const GenSpec& spec, uint64_t seed, const std::string& out_dir);

}  // namespace glide
