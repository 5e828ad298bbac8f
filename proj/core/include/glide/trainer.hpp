#pragma once

#include <string>
#include <vector>

#include "glide/config.hpp"
#include "glide/dataset.hpp"
#include "glide/glidenet.hpp"
#include "glide/metrics.hpp"
#include "glide/objective.hpp"

namespace glide {

// Geometry of every instance in one scene, derived from the stored modal
// masks: pixel-area, tight-bbox extents and centroid in source-image
// coordinates, ordered like the scene's instance list.
std::vector<SceneObject> scene_objects(const Dataset& d, int scene);

struct TrainResult {
  std::string final_checkpoint;
  std::vector<std::string> checkpoints;   // per-epoch, in schedule order
  std::vector<double> stage1_epoch_loss;  // mean batch total per epoch
  std::vector<double> stage2_epoch_loss;
  int64_t steps = 0;
};

// Runs the two-stage schedule over `data`, writing into out_dir: the echoed
// config (config.json), per-step CSV logs (train_stage1.csv /
// train_stage2.csv), one checkpoint per epoch and ckpt_final.glck. Stage I
// trains the three extractors through their temporary decoders; stage II
// drops those decoders from the graph (keeping the category estimator, which
// feeds the descriptor) and optimizes the routed attribute objective.
// Everything emitted is a pure function of (config, data).
TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir);

struct EvalOptions {
  std::string subset = "all";  // "all" | "low-pixel"
  double low_pixel_threshold = 0.35;
  bool route_by_estimator = false;  // diagnostic: argmax routing, disagreements counted
  int batch_size = 8;
};

struct EvalResult {
  MetricsReport report;
  int64_t evaluated = 0;
  int64_t routing_disagreements = 0;  // instances whose estimated category differs
};

// Scores the model over a dataset subset with ground-truth-category routing
// (or estimator routing as a diagnostic; disagreeing instances are counted
// and skipped, since their prediction vector is encoded for the wrong head).
EvalResult evaluate(GlideNet<float>& net, const Dataset& data, const EvalOptions& opt = {});

}  // namespace glide
