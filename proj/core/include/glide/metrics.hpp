#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glide/taxonomy.hpp"

namespace glide {

// Per-slot confusion counts over supervised entries only. One slot is one
// encoded position of a category's target vector: a binary attribute, or one
// value of a multi-valued group treated one-vs-rest.
struct SlotTally {
  int64_t tp = 0, tn = 0, p = 0, n = 0, pp = 0;
};

// Accumulated evaluation state for one subset: confusion tallies per
// (category, slot) plus per-union-slot score streams for average precision.
// Accumulation is order-independent and shards merge commutatively.
struct Tallies {
  explicit Tallies(const Taxonomy& taxonomy);

  const Taxonomy* tax;
  std::vector<std::vector<SlotTally>> cells;  // [category][slot < n_c(category)]
  std::vector<std::vector<std::pair<double, uint8_t>>> scored;  // [union slot] -> (score, label)
  std::vector<int64_t> category_instances;
  int64_t instances = 0;

  // Records one instance. Binary slots threshold at `threshold` (score >=
  // threshold predicts positive); multi-valued groups predict their argmax
  // (lowest index wins ties). Entries whose group is unsupervised are skipped
  // entirely. Vector lengths must equal n_c(category).
  void accumulate(int category, const std::vector<double>& pred,
                  const std::vector<double>& values, const std::vector<uint8_t>& supervised,
                  double threshold = 0.5);

  void merge(const Tallies& other);
};

// Area under the precision-recall curve with the monotone precision envelope
// over all operating points; tied scores enter the curve together. Returns a
// negative value when the stream has no positive label (the attribute is then
// excluded from mAP).
double average_precision(std::vector<std::pair<double, uint8_t>> scored);

struct MetricsReport {
  std::string subset = "all";
  bool empty = false;

  // Flat metrics: slots pooled within each category, unweighted category
  // means. Ratio terms with a zero denominator are dropped and the divisor
  // adjusted (skip-and-renormalize); `skipped_terms` counts the drops.
  double mA = 0, mP = 0, mR = 0, F1 = 0;
  // Hierarchical extension: per-(category, slot) terms, slot mean inside the
  // category, category mean outside.
  double h_mA = 0, h_mP = 0, h_mR = 0, h_F1 = 0;
  // Mean average precision over union slots with at least one positive.
  double mAP = 0;

  int64_t instances = 0;
  int64_t skipped_terms = 0;
  int64_t zero_positive_attrs = 0;

  struct CategoryRow {
    std::string name;
    double balanced_acc = 0, precision = 0, recall = 0;
    int64_t instances = 0;
  };
  struct AttributeRow {
    std::string name;  // "attr" or "attr=value"
    double ap = -1.0;
    int64_t positives = 0;
  };
  std::vector<CategoryRow> categories;
  std::vector<AttributeRow> attributes;

  // Deterministic serializations: a CSV with overall/category/attribute rows
  // and a plain-text summary.
  std::string csv() const;
  std::string text() const;
  void save_csv(const std::string& path) const;
  void save_text(const std::string& path) const;
};

MetricsReport compute_report(const Tallies& tallies, const std::string& subset);

}  // namespace glide
