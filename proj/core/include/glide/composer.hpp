#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glide/backbone.hpp"
#include "glide/layers.hpp"

namespace glide {

// Channel widths for the object descriptor and its gates. The paper_shape
// profile follows the published tables (descriptor output 128 x 224 x 224,
// gates 3 x 28 x 28); the desk profile runs the identical spatial schedule at
// a quarter of the channel width.
struct ComposerConfig {
  int mask_c1 = 4;        // mask branch, first stride-2 block
  int mask_c2 = 8;        // mask branch, second stride-2 block (= broadcast width)
  int cat_hidden = 32;    // category branch hidden width
  int up_c1 = 16;         // first upsampling block
  int out_channels = 32;  // descriptor output width C_D
  int gate_c1 = 16;       // gate, first stride-2 block
  int gate_c2 = 8;        // gate, second stride-2 block
  int image_size = 224;

  static ComposerConfig desk() { return {}; }
  static ComposerConfig tiny() { return {2, 4, 8, 4, 8, 4, 4, 64}; }
  static ComposerConfig paper_shape() { return {16, 32, 128, 64, 128, 64, 32, 224}; }
};

// Object Descriptor: encodes the binary object mask and the soft category
// embedding into a dense description map. The mask branch downsamples the
// mask 4x; the category branch maps the category PMF to a per-channel weight
// vector whose broadcast product with the mask features conditions the map on
// what the object is, not only where it is; two upsampling blocks restore
// full resolution with a final sigmoid.
template <class T>
struct DescriptorOutput {
  Tensor<T> description;   // [N, C_D, S, S], values in (0,1)
  Tensor<T> conditioned;   // [N, mask_c2, S/4, S/4] broadcast product (diagnostics)
  Tensor<T> mask_features; // [N, mask_c2, S/4, S/4] mask branch output
};

template <class T>
struct Descriptor {
  ComposerConfig cfg;
  ConvBnRelu<T> m1, m2;
  Linear<T> cat1, cat2;
  ConvBnRelu<T> p1;
  Conv2d<T> p2;
  BatchNorm2d<T> p2_bn;

  Descriptor() = default;
  Descriptor(const ComposerConfig& cfg_, int num_categories, Rng& rng, ParamSet<T>& ps,
             const std::string& name)
      : cfg(cfg_),
        m1(1, cfg_.mask_c1, 3, 2, rng, ps, name + ".m1"),
        m2(cfg_.mask_c1, cfg_.mask_c2, 3, 2, rng, ps, name + ".m2"),
        cat1(num_categories, cfg_.cat_hidden, rng, ps, name + ".cat1"),
        cat2(cfg_.cat_hidden, cfg_.mask_c2, rng, ps, name + ".cat2"),
        p1(cfg_.mask_c2, cfg_.up_c1, 3, 1, rng, ps, name + ".p1"),
        p2(cfg_.up_c1, cfg_.out_channels, 3, 1, rng, ps, name + ".p2"),
        p2_bn(cfg_.out_channels, ps, name + ".p2_bn") {}

  // `force_category_ones` is a test hook that replaces the category-branch
  // output with all-ones, turning the broadcast product into the identity.
  DescriptorOutput<T> forward(const Tensor<T>& mask, const Tensor<T>& c_hat, bool training,
                              Tape<T>* tape, bool force_category_ones = false) {
    const int S = cfg.image_size;
    check_shape(mask.ndim() == 4 && mask.dim(1) == 1 && mask.dim(2) == S && mask.dim(3) == S,
                "descriptor: want [N,1," + std::to_string(S) + "," + std::to_string(S) +
                    "] mask, got " + shape_str(mask.shape));
    check_shape(c_hat.ndim() == 2 && c_hat.dim(0) == mask.dim(0),
                "descriptor: category embedding shape mismatch " + shape_str(c_hat.shape));
    for (int n = 0; n < c_hat.dim(0); ++n) {
      T s = 0;
      for (int j = 0; j < c_hat.dim(1); ++j) s += c_hat[static_cast<int64_t>(n) * c_hat.dim(1) + j];
      if (std::abs(static_cast<double>(s) - 1.0) > 1e-4)
        fail(ErrorCategory::data, "descriptor: category embedding is not a probability vector");
    }

    DescriptorOutput<T> out;
    Tensor<T> m = m2.forward(m1.forward(mask, training, tape), training, tape);
    out.mask_features = m;
    Tensor<T> e;
    if (force_category_ones) {
      e = Tensor<T>::full({c_hat.dim(0), cfg.mask_c2}, T(1));
    } else {
      e = softmax_axis(cat2.forward(relu(cat1.forward(c_hat, tape), tape), tape), 1, tape);
    }
    Tensor<T> cond = mul_channel(m, e, tape);
    out.conditioned = cond;
    Tensor<T> u = p1.forward(cond, training, tape);
    u = upsample_nearest(u, S / 2, S / 2, tape);
    u = sigmoid(p2_bn.forward(p2.forward(u, tape), training, tape), tape);
    out.description = upsample_nearest(u, S, S, tape);
    return out;
  }
};

// One spatial attention gate: three stride-2 blocks take the description map
// from full resolution to the embedding grid, ending in a sigmoid so every
// level weight lies in (0,1). Each extractor owns an independent gate.
template <class T>
struct Gate {
  ComposerConfig cfg;
  ConvBnRelu<T> g1, g2;
  Conv2d<T> g3;
  BatchNorm2d<T> g3_bn;

  Gate() = default;
  Gate(const ComposerConfig& cfg_, Rng& rng, ParamSet<T>& ps, const std::string& name)
      : cfg(cfg_),
        g1(cfg_.out_channels, cfg_.gate_c1, 3, 2, rng, ps, name + ".g1"),
        g2(cfg_.gate_c1, cfg_.gate_c2, 3, 2, rng, ps, name + ".g2"),
        g3(cfg_.gate_c2, 3, 3, 2, rng, ps, name + ".g3"),
        g3_bn(3, ps, name + ".g3_bn") {}

  Tensor<T> forward(const Tensor<T>& d, bool training, Tape<T>* tape) {
    const int S = cfg.image_size;
    check_shape(d.dim(2) == S && d.dim(3) == S,
                "gate: description resolution mismatch " + shape_str(d.shape));
    Tensor<T> h = g2.forward(g1.forward(d, training, tape), training, tape);
    return sigmoid(g3_bn.forward(g3.forward(h, tape), training, tape), tape);
  }
};

// Attention-weighted reduction of a dense embedding: per level, the feature
// planes are summed with the matching attention channel as spatial weights,
// and the per-level vectors are concatenated.
template <class T>
Tensor<T> reduce_delta(const DenseEmbedding<T>& f, const Tensor<T>& attn, Tape<T>* tape) {
  return attention_reduce(f.assembled, attn, f.level_sizes, tape);
}

// Final fusion: concatenation of the reduced per-extractor vectors.
template <class T>
Tensor<T> fuse(const std::vector<Tensor<T>>& parts, Tape<T>* tape) {
  return concat_vectors(parts, tape);
}

}  // namespace glide
