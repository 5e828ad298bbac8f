#pragma once

#include <string>
#include <vector>

#include "glide/layers.hpp"
#include "glide/taxonomy.hpp"

namespace glide {

// Interpreter widths. The paper_shape profile keeps the published reduction
// (to m = 256); the desk profile quarters every width.
struct InterpreterConfig {
  int input_width = 672;  // fused vector length l
  int reduce_mid = 128;
  int reduced_width = 64;  // m
  int head_hidden = 32;

  static InterpreterConfig desk(int l) { return {l, 128, 64, 32}; }
  static InterpreterConfig tiny(int l) { return {l, 16, 8, 8}; }
  static InterpreterConfig paper_shape(int l) { return {l, 512, 256, 128}; }
};

// Shared dimensional reduction followed by one small head per category. Only
// the selected category's head touches the output, so routing is exact: other
// heads' parameters cannot influence the prediction. Output activation is
// taxonomy-driven — elementwise sigmoid for fixed-length (all-binary) styles,
// per-group softmax for grouped one-hot styles.
template <class T>
struct Interpreter {
  InterpreterConfig cfg;
  const Taxonomy* taxonomy = nullptr;
  Linear<T> r1, r2;
  std::vector<Linear<T>> head1, head2;

  Interpreter() = default;
  Interpreter(const InterpreterConfig& cfg_, const Taxonomy& tax, Rng& rng, ParamSet<T>& ps,
              const std::string& name)
      : cfg(cfg_),
        taxonomy(&tax),
        r1(cfg_.input_width, cfg_.reduce_mid, rng, ps, name + ".reduce1"),
        r2(cfg_.reduce_mid, cfg_.reduced_width, rng, ps, name + ".reduce2") {
    // ParamSet keeps raw pointers into the heads; size the vectors up front
    // so they never reallocate mid-registration.
    head1.reserve(tax.categories.size());
    head2.reserve(tax.categories.size());
    for (const auto& cat : tax.categories) {
      head1.emplace_back(cfg_.reduced_width, cfg_.head_hidden, rng, ps,
                         name + ".head." + cat.name + ".1");
      head2.emplace_back(cfg_.head_hidden, tax.n_c(cat.id), rng, ps,
                         name + ".head." + cat.name + ".2");
    }
  }

  // f_t: [1, l] fused vector for a single instance.
  Tensor<T> forward(const Tensor<T>& f_t, int category, Tape<T>* tape) {
    if (category < 0 || category >= taxonomy->num_categories())
      fail(ErrorCategory::data, "interpreter: unknown category id " + std::to_string(category));
    check_shape(f_t.ndim() == 2 && f_t.dim(1) == cfg.input_width,
                "interpreter: want [N," + std::to_string(cfg.input_width) + "], got " +
                    shape_str(f_t.shape));
    Tensor<T> h = relu(r2.forward(relu(r1.forward(f_t, tape), tape), tape), tape);
    const size_t ci = static_cast<size_t>(category);
    Tensor<T> logits =
        head2[ci].forward(relu(head1[ci].forward(h, tape), tape), tape);
    if (taxonomy->style == Taxonomy::Style::fixed_length) return sigmoid(logits, tape);
    return softmax_groups(logits, taxonomy->category_groups(category), tape);
  }
};

// Multi-object detection head: three convolution blocks at the embedding
// resolution, then the split activation gamma — sigmoid on the center
// confidence, sigmoid on the cell-relative center offsets, exponential on the
// width/height channels, softmax across the category channels.
template <class T>
struct DetectionHead {
  int num_categories = 0;
  ConvBnRelu<T> d1, d2;
  Conv2d<T> d3;

  DetectionHead() = default;
  DetectionHead(int in_channels, int mid, int num_categories_, Rng& rng, ParamSet<T>& ps,
                const std::string& name)
      : num_categories(num_categories_),
        d1(in_channels, mid, 3, 1, rng, ps, name + ".d1"),
        d2(mid, mid, 3, 1, rng, ps, name + ".d2"),
        d3(mid, num_categories_ + 5, 3, 1, rng, ps, name + ".d3") {}

  Tensor<T> forward(const Tensor<T>& f, bool training, Tape<T>* tape) {
    Tensor<T> h = d3.forward(d2.forward(d1.forward(f, training, tape), training, tape), tape);
    Tensor<T> conf = sigmoid(slice_channels(h, 0, 1, tape), tape);
    Tensor<T> center = sigmoid(slice_channels(h, 1, 3, tape), tape);
    Tensor<T> size = exp_act(slice_channels(h, 3, 5, tape), tape);
    Tensor<T> cat = softmax_axis(slice_channels(h, 5, 5 + num_categories, tape), 1, tape);
    return concat_channels({conf, center, size, cat}, tape);
  }
};

// Mask estimator: three conv blocks each followed by a 2x nearest upsample,
// then a final sigmoid convolution back to one channel at full resolution.
template <class T>
struct MaskEstimator {
  ConvBnRelu<T> u1, u2, u3;
  Conv2d<T> u4;

  MaskEstimator() = default;
  MaskEstimator(int in_channels, int c1, int c2, int c3, Rng& rng, ParamSet<T>& ps,
                const std::string& name)
      : u1(in_channels, c1, 3, 1, rng, ps, name + ".u1"),
        u2(c1, c2, 3, 1, rng, ps, name + ".u2"),
        u3(c2, c3, 3, 1, rng, ps, name + ".u3"),
        u4(c3, 1, 3, 1, rng, ps, name + ".u4") {}

  Tensor<T> forward(const Tensor<T>& f, bool training, Tape<T>* tape) {
    Tensor<T> h = f;
    h = u1.forward(h, training, tape);
    h = upsample_nearest(h, h.dim(2) * 2, h.dim(3) * 2, tape);
    h = u2.forward(h, training, tape);
    h = upsample_nearest(h, h.dim(2) * 2, h.dim(3) * 2, tape);
    h = u3.forward(h, training, tape);
    h = upsample_nearest(h, h.dim(2) * 2, h.dim(3) * 2, tape);
    return sigmoid(u4.forward(h, tape), tape);
  }
};

// Category estimator: global average pool plus one linear layer; returns both
// the raw logits and the softmax category embedding c-hat.
template <class T>
struct CategoryEstimator {
  Linear<T> fc;

  CategoryEstimator() = default;
  CategoryEstimator(int in_channels, int num_categories, Rng& rng, ParamSet<T>& ps,
                    const std::string& name)
      : fc(in_channels, num_categories, rng, ps, name + ".fc") {}

  struct Output {
    Tensor<T> logits;  // [N, c]
    Tensor<T> probs;   // [N, c] softmax
  };
  Output forward(const Tensor<T>& f, Tape<T>* tape) {
    Tensor<T> logits = fc.forward(global_avg_pool(f, tape), tape);
    return {logits, softmax_axis(logits, 1, tape)};
  }
};

// Local / intrinsic attribute estimator: global average pool plus one linear
// layer to the full union attribute width, with the taxonomy-driven output
// activation.
template <class T>
struct AttributeEstimator {
  const Taxonomy* taxonomy = nullptr;
  Linear<T> fc;

  AttributeEstimator() = default;
  AttributeEstimator(int in_channels, const Taxonomy& tax, Rng& rng, ParamSet<T>& ps,
                     const std::string& name)
      : taxonomy(&tax), fc(in_channels, tax.union_width(), rng, ps, name + ".fc") {}

  Tensor<T> forward(const Tensor<T>& f, Tape<T>* tape) {
    Tensor<T> logits = fc.forward(global_avg_pool(f, tape), tape);
    if (taxonomy->style == Taxonomy::Style::fixed_length) return sigmoid(logits, tape);
    return softmax_groups(logits, taxonomy->union_groups(), tape);
  }
};

}  // namespace glide
