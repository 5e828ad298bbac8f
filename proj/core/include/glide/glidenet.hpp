#pragma once

#include <memory>
#include <string>
#include <vector>

#include "glide/backbone.hpp"
#include "glide/composer.hpp"
#include "glide/config.hpp"
#include "glide/heads.hpp"

namespace glide {

// Full model: three dense-embedding extractors, the category-conditioned
// composer, the stage-one decoders and the final interpreter. Ablation
// variants change which modules exist and how the fusion is wired:
//
//   full                   — f_T = [f_G | f_L | f_I]
//   no_ife / no_gfe        — the named extractor (and its decoder) is absent
//   lfe_only               — only the local extractor feeds the interpreter
//   no_descriptor          — the description map is a constant 0.5 everywhere
//   no_category_embedding  — the descriptor sees a uniform category PMF
//
// Modules register their parameters in a fixed construction order (the order
// of the members below), which defines the checkpoint layout.
// Stage-I decoder widths (detection head middle channels, mask estimator
// channel schedule).
struct DecoderConfig {
  int modh_mid = 16;
  int me1 = 16, me2 = 8, me3 = 4;

  static DecoderConfig desk() { return {}; }
  static DecoderConfig tiny() { return {4, 8, 4, 2}; }
  static DecoderConfig paper_shape() { return {64, 64, 32, 16}; }
};

template <class T>
struct GlideNet {
  Taxonomy taxonomy;
  Variant variant = Variant::full;
  BackboneConfig bb_cfg;
  ComposerConfig comp_cfg;
  InterpreterConfig interp_cfg;
  DecoderConfig dec_cfg;
  ParamSet<T> params;

  std::unique_ptr<Backbone<T>> gfe, lfe, ife;
  std::unique_ptr<DetectionHead<T>> modh;
  std::unique_ptr<MaskEstimator<T>> mask_est;
  std::unique_ptr<CategoryEstimator<T>> cat_est;
  std::unique_ptr<AttributeEstimator<T>> lae, iae;
  std::unique_ptr<Descriptor<T>> descriptor;
  std::unique_ptr<Gate<T>> gate_g, gate_l, gate_i;
  std::unique_ptr<Interpreter<T>> interpreter;

  GlideNet(const Taxonomy& tax, Variant variant_, const std::string& profile, uint64_t seed)
      : GlideNet(tax, variant_, pick_backbone(profile), pick_composer(profile),
                 pick_interpreter(profile), pick_decoders(profile), seed) {}

  GlideNet(const Taxonomy& tax, Variant variant_, const BackboneConfig& bb,
           const ComposerConfig& comp, const InterpreterConfig& interp, const DecoderConfig& dec,
           uint64_t seed)
      : taxonomy(tax), variant(variant_), bb_cfg(bb), comp_cfg(comp), interp_cfg(interp),
        dec_cfg(dec) {
    taxonomy.validate();
    check_shape(comp_cfg.image_size == bb_cfg.input_size,
                "glidenet: composer/backbone input size mismatch");
    const int c = taxonomy.num_categories();
    const int width = bb_cfg.total_channels();
    interp_cfg.input_width = width * static_cast<int>(active_extractors().size());

    Rng rng(seed, "init");
    if (use_gfe()) gfe = std::make_unique<Backbone<T>>(bb_cfg, rng, params, "gfe");
    lfe = std::make_unique<Backbone<T>>(bb_cfg, rng, params, "lfe");
    if (use_ife()) ife = std::make_unique<Backbone<T>>(bb_cfg, rng, params, "ife");
    if (use_gfe())
      modh = std::make_unique<DetectionHead<T>>(width, dec_cfg.modh_mid, c, rng, params, "modh");
    mask_est = std::make_unique<MaskEstimator<T>>(width, dec_cfg.me1, dec_cfg.me2, dec_cfg.me3,
                                                  rng, params, "mask_est");
    cat_est = std::make_unique<CategoryEstimator<T>>(width, c, rng, params, "cat_est");
    lae = std::make_unique<AttributeEstimator<T>>(width, taxonomy, rng, params, "lae");
    if (use_ife()) iae = std::make_unique<AttributeEstimator<T>>(width, taxonomy, rng, params, "iae");
    if (variant != Variant::no_descriptor)
      descriptor = std::make_unique<Descriptor<T>>(comp_cfg, c, rng, params, "descriptor");
    if (use_gfe()) gate_g = std::make_unique<Gate<T>>(comp_cfg, rng, params, "gate_g");
    gate_l = std::make_unique<Gate<T>>(comp_cfg, rng, params, "gate_l");
    if (use_ife()) gate_i = std::make_unique<Gate<T>>(comp_cfg, rng, params, "gate_i");
    interpreter = std::make_unique<Interpreter<T>>(interp_cfg, taxonomy, rng, params, "interpreter");
  }

  static BackboneConfig pick_backbone(const std::string& profile) {
    if (profile == "desk") return BackboneConfig::desk();
    if (profile == "tiny") return BackboneConfig::tiny();
    if (profile == "paper_shape") return BackboneConfig::paper_shape();
    fail(ErrorCategory::config, "unknown model profile '" + profile + "'");
  }
  static ComposerConfig pick_composer(const std::string& profile) {
    if (profile == "tiny") return ComposerConfig::tiny();
    return profile == "desk" ? ComposerConfig::desk() : ComposerConfig::paper_shape();
  }
  static InterpreterConfig pick_interpreter(const std::string& profile) {
    if (profile == "tiny") return InterpreterConfig::tiny(0);
    return profile == "desk" ? InterpreterConfig::desk(0) : InterpreterConfig::paper_shape(0);
  }
  static DecoderConfig pick_decoders(const std::string& profile) {
    if (profile == "tiny") return DecoderConfig::tiny();
    return profile == "desk" ? DecoderConfig::desk() : DecoderConfig::paper_shape();
  }

  GlideNet(const GlideNet&) = delete;
  GlideNet& operator=(const GlideNet&) = delete;

  bool use_gfe() const { return variant != Variant::no_gfe && variant != Variant::lfe_only; }
  bool use_ife() const { return variant != Variant::no_ife && variant != Variant::lfe_only; }

  std::vector<char> active_extractors() const {
    std::vector<char> a;
    if (use_gfe()) a.push_back('G');
    a.push_back('L');
    if (use_ife()) a.push_back('I');
    return a;
  }

  // ---- Stage-I forwards (extractors plus their temporary decoders) ----

  // Scenes -> detection grid [N, c+5, h, w].
  Tensor<T> stage1_gfe(const Tensor<T>& scenes, bool training, Tape<T>* tape) {
    DenseEmbedding<T> f = gfe->forward(scenes, training, tape);
    return modh->forward(f.assembled, training, tape);
  }

  struct LfeOutputs {
    Tensor<T> mask_pred;   // [N,1,S,S]
    Tensor<T> cat_logits;  // [N,c]
    Tensor<T> cat_probs;   // [N,c]
    Tensor<T> attrs;       // [N, union width]
  };
  LfeOutputs stage1_lfe(const Tensor<T>& crops, bool training, Tape<T>* tape) {
    DenseEmbedding<T> f = lfe->forward(crops, training, tape);
    auto cat = cat_est->forward(f.assembled, tape);
    return {mask_est->forward(f.assembled, training, tape), cat.logits, cat.probs,
            lae->forward(f.assembled, tape)};
  }

  // Crops + masks -> intrinsic attribute predictions [N, union width].
  Tensor<T> stage1_ife(const Tensor<T>& crops, const Tensor<T>& masks, bool training,
                       Tape<T>* tape) {
    MaskedDenseEmbedding<T> f = ife->forward_informed(crops, masks, training, tape);
    return iae->forward(f.embedding.assembled, tape);
  }

  // ---- Stage-II forward (full pipeline) ----

  struct Stage2Outputs {
    Tensor<T> fused;                  // [N, l]
    Tensor<T> cat_logits, cat_probs;  // [N, c]
    std::vector<Tensor<T>> attrs;     // per sample, [1, n_c(routed)]
    std::vector<int> routed;          // category driving each head
  };

  // `categories` are the ground-truth ids used for head routing (and for the
  // category loss); with route_by_estimator the head choice follows the
  // category estimator's argmax instead, as an inference-mode diagnostic.
  Stage2Outputs stage2_forward(const Tensor<T>& scenes, const Tensor<T>& crops,
                               const Tensor<T>& crop_masks, const std::vector<int>& categories,
                               bool training, Tape<T>* tape, bool route_by_estimator = false) {
    const int N = crops.dim(0);
    check_shape(static_cast<int>(categories.size()) == N, "stage2: category count mismatch");
    Stage2Outputs out;

    DenseEmbedding<T> f_l = lfe->forward(crops, training, tape);
    auto cat = cat_est->forward(f_l.assembled, tape);
    out.cat_logits = cat.logits;
    out.cat_probs = cat.probs;

    Tensor<T> d;
    if (descriptor) {
      Tensor<T> c_hat = cat.probs;
      if (variant == Variant::no_category_embedding)
        c_hat = Tensor<T>::full({N, taxonomy.num_categories()},
                                T(1) / static_cast<T>(taxonomy.num_categories()));
      d = descriptor->forward(crop_masks, c_hat, training, tape).description;
    } else {
      d = Tensor<T>::full({N, comp_cfg.out_channels, comp_cfg.image_size, comp_cfg.image_size},
                          T(0.5));
    }

    std::vector<Tensor<T>> parts;
    if (use_gfe()) {
      DenseEmbedding<T> f_g = gfe->forward(scenes, training, tape);
      parts.push_back(reduce_delta(f_g, gate_g->forward(d, training, tape), tape));
    }
    parts.push_back(reduce_delta(f_l, gate_l->forward(d, training, tape), tape));
    if (use_ife()) {
      MaskedDenseEmbedding<T> f_i = ife->forward_informed(crops, crop_masks, training, tape);
      parts.push_back(reduce_delta(f_i.embedding, gate_i->forward(d, training, tape), tape));
    }
    out.fused = fuse(parts, tape);

    for (int n = 0; n < N; ++n) {
      int route = categories[static_cast<size_t>(n)];
      if (route_by_estimator) {
        route = 0;
        const int c = taxonomy.num_categories();
        for (int j = 1; j < c; ++j)
          if (cat.probs[static_cast<int64_t>(n) * c + j] >
              cat.probs[static_cast<int64_t>(n) * c + route])
            route = j;
      }
      out.routed.push_back(route);
      out.attrs.push_back(interpreter->forward(slice_row(out.fused, n, tape), route, tape));
    }
    return out;
  }
};

}  // namespace glide
