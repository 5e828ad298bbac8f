#include "glide/config.hpp"

#include <set>

#include "glide/base.hpp"
#include "glide/io.hpp"

namespace glide {

namespace {

using ordered_json = nlohmann::ordered_json;

// Strict field access: unknown keys are configuration typos, not extensions.
void check_keys(const ordered_json& j, const std::set<std::string>& allowed,
                const std::string& who) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      fail(ErrorCategory::config, who + ": unknown field '" + it.key() + "'");
}

template <class T>
T get_or(const ordered_json& j, const std::string& key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::config, "field '" + key + "': " + e.what());
  }
}

ordered_json parse_file(const std::string& path, const char* who) {
  auto bytes = read_file_bytes(path);
  try {
    return ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::config, std::string(who) + ": cannot parse " + path + ": " + e.what());
  }
}

}  // namespace

ordered_json LossWeights::to_json() const {
  ordered_json j;
  j["gp0"] = gp0;
  j["gp"] = gp;
  j["gd"] = gd;
  j["gc"] = gc;
  j["lm"] = lm;
  j["lc"] = lc;
  j["la"] = la;
  j["ia"] = ia;
  j["lc2"] = lc2;
  return j;
}

LossWeights LossWeights::from_json(const ordered_json& j) {
  check_keys(j, {"gp0", "gp", "gd", "gc", "lm", "lc", "la", "ia", "lc2"}, "loss_weights");
  LossWeights w;
  w.gp0 = get_or(j, "gp0", w.gp0);
  w.gp = get_or(j, "gp", w.gp);
  w.gd = get_or(j, "gd", w.gd);
  w.gc = get_or(j, "gc", w.gc);
  w.lm = get_or(j, "lm", w.lm);
  w.lc = get_or(j, "lc", w.lc);
  w.la = get_or(j, "la", w.la);
  w.ia = get_or(j, "ia", w.ia);
  w.lc2 = get_or(j, "lc2", w.lc2);
  for (double v : {w.gp0, w.gp, w.gd, w.gc, w.lm, w.lc, w.la, w.ia, w.lc2})
    if (!(v >= 0.0)) fail(ErrorCategory::config, "loss_weights: weights must be nonnegative");
  return w;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_ife: return "no_ife";
    case Variant::no_gfe: return "no_gfe";
    case Variant::lfe_only: return "lfe_only";
    case Variant::no_descriptor: return "no_descriptor";
    case Variant::no_category_embedding: return "no_category_embedding";
  }
  return "full";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : all_variants())
    if (name == variant_name(v)) return v;
  fail(ErrorCategory::config, "unknown variant '" + name +
                                  "' (expected one of: full, no_ife, no_gfe, lfe_only, "
                                  "no_descriptor, no_category_embedding)");
}

std::vector<Variant> all_variants() {
  return {Variant::full,    Variant::no_ife,        Variant::no_gfe,
          Variant::lfe_only, Variant::no_descriptor, Variant::no_category_embedding};
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["format_version"] = 1;
  j["stage1_epochs"] = stage1_epochs;
  j["stage2_epochs"] = stage2_epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["seed"] = seed;
  j["profile"] = profile;
  j["loss_weights"] = weights.to_json();
  j["variant"] = variant_name(variant);
  j["train_extractors_stage2"] = train_extractors_stage2;
  j["route_by_estimator"] = route_by_estimator;
  return j;
}

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  check_keys(j,
             {"format_version", "stage1_epochs", "stage2_epochs", "batch_size", "lr", "seed",
              "profile", "loss_weights", "variant", "train_extractors_stage2",
              "route_by_estimator"},
             "train config");
  if (get_or(j, "format_version", 1) != 1)
    fail(ErrorCategory::config, "train config: unsupported format_version");
  TrainConfig c;
  c.stage1_epochs = get_or(j, "stage1_epochs", c.stage1_epochs);
  c.stage2_epochs = get_or(j, "stage2_epochs", c.stage2_epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.lr = get_or(j, "lr", c.lr);
  c.seed = get_or(j, "seed", c.seed);
  c.profile = get_or(j, "profile", c.profile);
  if (j.contains("loss_weights")) c.weights = LossWeights::from_json(j.at("loss_weights"));
  c.variant = variant_from_name(get_or<std::string>(j, "variant", "full"));
  c.train_extractors_stage2 = get_or(j, "train_extractors_stage2", c.train_extractors_stage2);
  c.route_by_estimator = get_or(j, "route_by_estimator", c.route_by_estimator);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0)
    fail(ErrorCategory::config, "train config: epoch counts must be nonnegative");
  if (batch_size < 1) fail(ErrorCategory::config, "train config: batch_size must be >= 1");
  if (!(lr > 0.0)) fail(ErrorCategory::config, "train config: lr must be positive");
  if (profile != "desk" && profile != "tiny" && profile != "paper_shape")
    fail(ErrorCategory::config, "train config: profile must be 'desk', 'tiny' or 'paper_shape'");
}

void TrainConfig::save(const std::string& path) const {
  const std::string text = to_json().dump(2) + "\n";
  write_file_bytes(path, text.data(), text.size());
}

TrainConfig TrainConfig::load(const std::string& path) {
  return from_json(parse_file(path, "train config"));
}

GeneratorSpec GeneratorSpec::desk_default() {
  GeneratorSpec s;
  s.train_counts = {{"block", 500}, {"disk", 500}, {"pole", 500}, {"strip", 500}};
  s.val_counts = {{"block", 125}, {"disk", 125}, {"pole", 125}, {"strip", 125}};
  return s;
}

ordered_json GeneratorSpec::to_json() const {
  ordered_json j;
  j["format_version"] = 1;
  j["image_size"] = image_size;
  j["min_objects"] = min_objects;
  j["max_objects"] = max_objects;
  j["min_visibility"] = min_visibility;
  j["unclear_prob"] = unclear_prob;
  j["min_occluded_fraction"] = min_occluded_fraction;
  auto counts = [](const std::vector<std::pair<std::string, int>>& v) {
    ordered_json o;
    for (const auto& [name, n] : v) o[name] = n;
    return o;
  };
  j["train_instances"] = counts(train_counts);
  j["val_instances"] = counts(val_counts);
  return j;
}

GeneratorSpec GeneratorSpec::from_json(const ordered_json& j) {
  check_keys(j,
             {"format_version", "image_size", "min_objects", "max_objects", "min_visibility",
              "unclear_prob", "min_occluded_fraction", "train_instances", "val_instances"},
             "generator spec");
  if (get_or(j, "format_version", 1) != 1)
    fail(ErrorCategory::config, "generator spec: unsupported format_version");
  GeneratorSpec s;
  s.image_size = get_or(j, "image_size", s.image_size);
  s.min_objects = get_or(j, "min_objects", s.min_objects);
  s.max_objects = get_or(j, "max_objects", s.max_objects);
  s.min_visibility = get_or(j, "min_visibility", s.min_visibility);
  s.unclear_prob = get_or(j, "unclear_prob", s.unclear_prob);
  s.min_occluded_fraction = get_or(j, "min_occluded_fraction", s.min_occluded_fraction);
  auto counts = [](const ordered_json& o, const char* who) {
    std::vector<std::pair<std::string, int>> v;
    for (auto it = o.begin(); it != o.end(); ++it) {
      if (!it.value().is_number_integer())
        fail(ErrorCategory::config, std::string(who) + ": count for '" + it.key() +
                                        "' must be an integer");
      v.emplace_back(it.key(), it.value().get<int>());
    }
    return v;
  };
  if (j.contains("train_instances")) s.train_counts = counts(j.at("train_instances"), "train_instances");
  if (j.contains("val_instances")) s.val_counts = counts(j.at("val_instances"), "val_instances");
  s.validate();
  return s;
}

void GeneratorSpec::validate() const {
  if (image_size < 32) fail(ErrorCategory::config, "generator spec: image_size too small");
  if (min_objects < 1 || max_objects < min_objects)
    fail(ErrorCategory::config, "generator spec: need 1 <= min_objects <= max_objects");
  if (!(min_visibility > 0.0 && min_visibility <= 1.0))
    fail(ErrorCategory::config, "generator spec: min_visibility must be in (0,1]");
  if (!(unclear_prob >= 0.0 && unclear_prob <= 1.0))
    fail(ErrorCategory::config, "generator spec: unclear_prob must be in [0,1]");
  if (!(min_occluded_fraction >= 0.0 && min_occluded_fraction <= 1.0))
    fail(ErrorCategory::config, "generator spec: min_occluded_fraction must be in [0,1]");
  if (min_occluded_fraction > 0.0 && max_objects < 2)
    fail(ErrorCategory::config,
         "generator spec: occlusion is unsatisfiable with a single object per scene");
  if (train_counts.empty())
    fail(ErrorCategory::config, "generator spec: train_instances must not be empty");
  static const std::set<std::string> known = {"block", "disk", "pole", "strip"};
  for (const auto& list : {train_counts, val_counts})
    for (const auto& [name, n] : list) {
      if (!known.count(name))
        fail(ErrorCategory::config, "generator spec: unknown category '" + name +
                                        "' (known: block, disk, pole, strip)");
      if (n < 0) fail(ErrorCategory::config, "generator spec: negative count for '" + name + "'");
    }
}

void GeneratorSpec::save(const std::string& path) const {
  const std::string text = to_json().dump(2) + "\n";
  write_file_bytes(path, text.data(), text.size());
}

GeneratorSpec GeneratorSpec::load(const std::string& path) {
  return from_json(parse_file(path, "generator spec"));
}

}  // namespace glide
