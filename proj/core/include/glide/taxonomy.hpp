#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace glide {

// Attribute taxonomy. A pool of attribute schemas (each binary or a
// multi-valued group) plus an ordered list of categories, each referencing a
// subset of the pool. Every head width, target length and encoding offset in
// the system derives from this structure; nothing else may hard-code an
// attribute count.
//
// Two styles:
//   fixed_length — every category carries the full pool, all attributes
//                  binary, so every head has the same width n (VAW-like);
//   per_category — categories reference different subsets of (typically
//                  multi-valued) groups, so head widths differ (CAR-like).
struct AttributeSchema {
  std::string name;
  bool multi_valued = false;
  std::vector<std::string> values;  // empty for binary attributes

  int width() const { return multi_valued ? static_cast<int>(values.size()) : 1; }
};

struct CategorySchema {
  std::string name;
  int id = 0;
  std::vector<int> attrs;  // indices into Taxonomy::attributes, in encoding order
};

struct Taxonomy {
  enum class Style { fixed_length, per_category };

  Style style = Style::per_category;
  std::vector<AttributeSchema> attributes;  // the pool; also the union layout order
  std::vector<CategorySchema> categories;

  int num_categories() const { return static_cast<int>(categories.size()); }
  int num_attributes() const { return static_cast<int>(attributes.size()); }

  // Width of the union encoding (LAE/IAE output width).
  int union_width() const;
  // Offset of pool attribute `attr` inside the union encoding.
  int union_offset(int attr) const;
  // Encoded width of one category's target/head (n_c).
  int n_c(int cat) const;
  // (offset, length) of each attribute group inside the category encoding,
  // in the category's declaration order. Binary attributes have length 1.
  std::vector<std::pair<int, int>> category_groups(int cat) const;
  // Same for the union encoding, one entry per pool attribute.
  std::vector<std::pair<int, int>> union_groups() const;

  // Segment map from a category encoding into the union encoding.
  struct Segment {
    int cat_off = 0;
    int union_off = 0;
    int len = 0;
  };
  std::vector<Segment> union_segments(int cat) const;

  int attribute_index(const std::string& name) const;  // -1 when absent
  int category_index(const std::string& name) const;   // -1 when absent

  // Structural validation; throws data errors with a precise message.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static Taxonomy from_json(const nlohmann::ordered_json& j);

  // Canonical serialized form; identical bytes for identical taxonomies. The
  // hash of these bytes identifies the taxonomy in checkpoints.
  std::string canonical_text() const;
  uint64_t hash() const;

  void save(const std::string& path) const;
  static Taxonomy load(const std::string& path);
};

}  // namespace glide
