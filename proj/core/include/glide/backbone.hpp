#pragma once

#include <array>
#include <string>
#include <vector>

#include "glide/layers.hpp"

namespace glide {

// Miniature three-stage trunk standing in for a large pretrained backbone.
// A two-block stem downsamples 4x, then each stage opens with a stride-2
// block; taps after the stages land at 1/8, 1/16, and 1/32 of the input, so
// a 224 input yields 28/14/7 feature maps. The paper_shape profile keeps the
// published channel arithmetic (concat width 768); the desk profile is the
// same network at a quarter of the width.
struct BackboneConfig {
  std::array<int, 3> stage_channels{32, 64, 128};
  int input_size = 224;
  int blocks_per_stage = 2;
  std::string profile = "desk";

  static BackboneConfig desk() { return {}; }
  // Miniature profile for fast tests and reduced-schedule experiments:
  // same topology at 64x64 input with narrow channels.
  static BackboneConfig tiny() {
    BackboneConfig c;
    c.stage_channels = {8, 12, 16};
    c.input_size = 64;
    c.blocks_per_stage = 1;
    c.profile = "tiny";
    return c;
  }
  static BackboneConfig paper_shape() {
    BackboneConfig c;
    c.stage_channels = {128, 128, 512};
    c.profile = "paper_shape";
    return c;
  }
  int total_channels() const {
    return stage_channels[0] + stage_channels[1] + stage_channels[2];
  }
  int stem1_channels() const { return std::max(4, stage_channels[0] / 4); }
  int stem2_channels() const { return std::max(8, stage_channels[0] / 2); }
  int tap_size(int level) const {  // level in {0,1,2}
    return input_size >> (3 + level);
  }
};

// Three per-level taps plus their upsampled channel concatenation. Offsets
// record where each level lives inside `assembled` so slices can recover the
// (upsampled) per-level maps bit-exactly.
template <class T>
struct DenseEmbedding {
  std::vector<Tensor<T>> levels;   // taps at 1/8, 1/16, 1/32 resolution
  Tensor<T> assembled;             // [N, C_total, h1, w1]
  std::vector<int> level_sizes;    // channels per level
  std::vector<int> level_offsets;  // channel offset of each level in `assembled`
};

template <class T>
struct MaskedDenseEmbedding {
  DenseEmbedding<T> embedding;
  std::vector<Tensor<T>> mask_pyramid;  // propagated mask at each tap resolution
  bool mask_empty = false;              // absorbing-state diagnostic
};

template <class T>
DenseEmbedding<T> assemble_levels(std::vector<Tensor<T>> taps, Tape<T>* tape) {
  DenseEmbedding<T> out;
  const int h = taps[0].dim(2), w = taps[0].dim(3);
  std::vector<Tensor<T>> ups;
  ups.push_back(taps[0]);
  for (size_t i = 1; i < taps.size(); ++i) ups.push_back(upsample_nearest(taps[i], h, w, tape));
  out.assembled = concat_channels(ups, tape);
  out.levels = std::move(taps);
  int off = 0;
  for (const auto& t : out.levels) {
    out.level_offsets.push_back(off);
    out.level_sizes.push_back(t.dim(1));
    off += t.dim(1);
  }
  return out;
}

template <class T>
struct Backbone {
  BackboneConfig cfg;
  std::vector<ConvBnRelu<T>> blocks;  // stem (2) + stages (3 * blocks_per_stage)
  std::array<int, 3> tap_after{};     // block index whose output is tap i

  Backbone() = default;
  Backbone(const BackboneConfig& cfg_, Rng& rng, ParamSet<T>& ps, const std::string& name)
      : cfg(cfg_) {
    // ParamSet keeps raw pointers into the blocks, so the vector must never
    // reallocate after construction starts.
    blocks.reserve(2 + 3 * static_cast<size_t>(cfg.blocks_per_stage));
    int ci = 3;
    auto push = [&](int co, int stride, const std::string& bname) {
      blocks.emplace_back(ci, co, 3, stride, rng, ps, name + "." + bname);
      ci = co;
    };
    push(cfg.stem1_channels(), 2, "stem1");
    push(cfg.stem2_channels(), 2, "stem2");
    for (int s = 0; s < 3; ++s) {
      for (int b = 0; b < cfg.blocks_per_stage; ++b)
        push(cfg.stage_channels[static_cast<size_t>(s)], b == 0 ? 2 : 1,
             "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1));
      tap_after[static_cast<size_t>(s)] = static_cast<int>(blocks.size()) - 1;
    }
  }

  DenseEmbedding<T> forward(const Tensor<T>& x, bool training, Tape<T>* tape) {
    check_shape(x.ndim() == 4 && x.dim(2) == cfg.input_size && x.dim(3) == cfg.input_size,
                "backbone: want [N,3," + std::to_string(cfg.input_size) + "," +
                    std::to_string(cfg.input_size) + "], got " + shape_str(x.shape));
    std::vector<Tensor<T>> taps;
    Tensor<T> h = x;
    for (size_t i = 0; i < blocks.size(); ++i) {
      h = blocks[i].forward(h, training, tape);
      for (int s = 0; s < 3; ++s)
        if (tap_after[static_cast<size_t>(s)] == static_cast<int>(i)) taps.push_back(h);
    }
    return assemble_levels(std::move(taps), tape);
  }

  // Same parameters, informed path: every convolution is mask-renormalized
  // and every batch norm weights its statistics by the propagated mask.
  MaskedDenseEmbedding<T> forward_informed(const Tensor<T>& x, const Tensor<T>& mask,
                                           bool training, Tape<T>* tape) {
    check_shape(mask.ndim() == 4 && mask.dim(1) == 1 && mask.dim(2) == x.dim(2) &&
                    mask.dim(3) == x.dim(3),
                "backbone: mask shape mismatch " + shape_str(mask.shape));
    MaskedDenseEmbedding<T> out;
    out.mask_empty = sum_lanes8(mask.ptr(), mask.numel()) <= T(0);
    std::vector<Tensor<T>> taps;
    MaskedFeature<T> h{x, mask};
    for (size_t i = 0; i < blocks.size(); ++i) {
      h = blocks[i].forward_informed(h, training, tape);
      for (int s = 0; s < 3; ++s)
        if (tap_after[static_cast<size_t>(s)] == static_cast<int>(i)) {
          taps.push_back(h.features);
          out.mask_pyramid.push_back(h.mask);
        }
    }
    out.embedding = assemble_levels(std::move(taps), tape);
    return out;
  }
};

}  // namespace glide
