#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace glide {

// Loss-term weights. Defaults are the cross-validated values quoted for the
// full loss: gp0, gp, gd, gc, lm, lc, la, ia, lc2.
struct LossWeights {
  double gp0 = 1.0;
  double gp = 0.01;
  double gd = 0.5;
  double gc = 0.5;
  double lm = 0.1;
  double lc = 0.01;
  double la = 1.0;
  double ia = 1.0;
  double lc2 = 0.01;

  nlohmann::ordered_json to_json() const;
  static LossWeights from_json(const nlohmann::ordered_json& j);
};

// Model/training variants for the ablation driver. `full` is the complete
// architecture; the others disable one component while keeping the same
// seed and schedule.
enum class Variant {
  full,
  no_ife,
  no_gfe,
  lfe_only,
  no_descriptor,
  no_category_embedding,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);  // throws config error
std::vector<Variant> all_variants();

struct TrainConfig {
  int stage1_epochs = 15;
  int stage2_epochs = 10;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  std::string profile = "desk";  // backbone profile: desk | paper_shape
  LossWeights weights;
  Variant variant = Variant::full;
  // Stage II trains the extractors end-to-end by default; switch off to
  // freeze them and train only the composer/interpreter path.
  bool train_extractors_stage2 = true;
  // Diagnostic: route the interpreter by the category estimator's argmax
  // instead of the ground-truth category at evaluation time.
  bool route_by_estimator = false;

  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
  void save(const std::string& path) const;
  static TrainConfig load(const std::string& path);
  void validate() const;
};

// Synthetic-scene generator spec: instance counts per category and split,
// plus scene composition knobs.
struct GeneratorSpec {
  int image_size = 224;
  int min_objects = 1;
  int max_objects = 5;
  double min_visibility = 0.4;  // modal/amodal area ratio kept above this
  double unclear_prob = 0.1;    // chance one attribute group is marked unclear
  // Required share of occluded instances; > 0 makes single-object specs
  // unsatisfiable and is verified after generation.
  double min_occluded_fraction = 0.0;
  std::vector<std::pair<std::string, int>> train_counts;  // (category, instances)
  std::vector<std::pair<std::string, int>> val_counts;

  static GeneratorSpec desk_default();

  nlohmann::ordered_json to_json() const;
  static GeneratorSpec from_json(const nlohmann::ordered_json& j);
  void save(const std::string& path) const;
  static GeneratorSpec load(const std::string& path);
  void validate() const;
};

}  // namespace glide
