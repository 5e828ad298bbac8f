#include "glide/taxonomy.hpp"

#include <set>

#include "glide/base.hpp"
#include "glide/io.hpp"
#include "glide/rng.hpp"

namespace glide {

int Taxonomy::union_width() const {
  int w = 0;
  for (const auto& a : attributes) w += a.width();
  return w;
}

int Taxonomy::union_offset(int attr) const {
  int off = 0;
  for (int i = 0; i < attr; ++i) off += attributes[i].width();
  return off;
}

int Taxonomy::n_c(int cat) const {
  int w = 0;
  for (int ai : categories.at(cat).attrs) w += attributes.at(ai).width();
  return w;
}

std::vector<std::pair<int, int>> Taxonomy::category_groups(int cat) const {
  std::vector<std::pair<int, int>> out;
  int off = 0;
  for (int ai : categories.at(cat).attrs) {
    const int w = attributes.at(ai).width();
    out.emplace_back(off, w);
    off += w;
  }
  return out;
}

std::vector<std::pair<int, int>> Taxonomy::union_groups() const {
  std::vector<std::pair<int, int>> out;
  int off = 0;
  for (const auto& a : attributes) {
    out.emplace_back(off, a.width());
    off += a.width();
  }
  return out;
}

std::vector<Taxonomy::Segment> Taxonomy::union_segments(int cat) const {
  std::vector<Segment> out;
  int coff = 0;
  for (int ai : categories.at(cat).attrs) {
    const int w = attributes.at(ai).width();
    out.push_back({coff, union_offset(ai), w});
    coff += w;
  }
  return out;
}

int Taxonomy::attribute_index(const std::string& name) const {
  for (size_t i = 0; i < attributes.size(); ++i)
    if (attributes[i].name == name) return static_cast<int>(i);
  return -1;
}

int Taxonomy::category_index(const std::string& name) const {
  for (size_t i = 0; i < categories.size(); ++i)
    if (categories[i].name == name) return static_cast<int>(i);
  return -1;
}

void Taxonomy::validate() const {
  if (attributes.empty()) fail(ErrorCategory::data, "taxonomy: no attributes");
  if (categories.empty()) fail(ErrorCategory::data, "taxonomy: no categories");
  std::set<std::string> names;
  for (const auto& a : attributes) {
    if (a.name.empty()) fail(ErrorCategory::data, "taxonomy: empty attribute name");
    if (!names.insert(a.name).second)
      fail(ErrorCategory::data, "taxonomy: duplicate attribute '" + a.name + "'");
    if (a.multi_valued) {
      if (a.values.size() < 2)
        fail(ErrorCategory::data, "taxonomy: multi-valued attribute '" + a.name +
                                      "' needs at least 2 values");
      std::set<std::string> vals(a.values.begin(), a.values.end());
      if (vals.size() != a.values.size())
        fail(ErrorCategory::data, "taxonomy: duplicate value in attribute '" + a.name + "'");
    } else if (!a.values.empty()) {
      fail(ErrorCategory::data,
           "taxonomy: binary attribute '" + a.name + "' must not list values");
    }
  }
  std::set<std::string> cnames;
  for (size_t i = 0; i < categories.size(); ++i) {
    const auto& c = categories[i];
    if (c.name.empty()) fail(ErrorCategory::data, "taxonomy: empty category name");
    if (!cnames.insert(c.name).second)
      fail(ErrorCategory::data, "taxonomy: duplicate category '" + c.name + "'");
    if (c.id != static_cast<int>(i))
      fail(ErrorCategory::data, "taxonomy: category ids must be dense from 0 in order (category '" +
                                    c.name + "' has id " + std::to_string(c.id) + " at position " +
                                    std::to_string(i) + ")");
    if (c.attrs.empty())
      fail(ErrorCategory::data, "taxonomy: category '" + c.name + "' has no attributes");
    std::set<int> seen;
    for (int ai : c.attrs) {
      if (ai < 0 || ai >= static_cast<int>(attributes.size()))
        fail(ErrorCategory::data, "taxonomy: category '" + c.name + "' references attribute " +
                                      std::to_string(ai) + " outside the pool");
      if (!seen.insert(ai).second)
        fail(ErrorCategory::data, "taxonomy: category '" + c.name + "' repeats attribute '" +
                                      attributes[ai].name + "'");
    }
  }
  if (style == Style::fixed_length) {
    for (const auto& a : attributes)
      if (a.multi_valued)
        fail(ErrorCategory::data,
             "taxonomy: fixed-length style requires binary attributes ('" + a.name + "' is not)");
    for (const auto& c : categories) {
      if (static_cast<int>(c.attrs.size()) != num_attributes())
        fail(ErrorCategory::data, "taxonomy: fixed-length style requires every category to carry "
                                  "the full attribute pool (category '" + c.name + "' does not)");
      for (size_t i = 0; i < c.attrs.size(); ++i)
        if (c.attrs[i] != static_cast<int>(i))
          fail(ErrorCategory::data,
               "taxonomy: fixed-length style requires pool order in category '" + c.name + "'");
    }
  }
}

nlohmann::ordered_json Taxonomy::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["style"] = style == Style::fixed_length ? "fixed_length" : "per_category";
  j["attributes"] = nlohmann::ordered_json::array();
  for (const auto& a : attributes) {
    nlohmann::ordered_json ja;
    ja["name"] = a.name;
    ja["multi_valued"] = a.multi_valued;
    if (a.multi_valued) ja["values"] = a.values;
    j["attributes"].push_back(std::move(ja));
  }
  j["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : categories) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["id"] = c.id;
    std::vector<std::string> names;
    for (int ai : c.attrs) names.push_back(attributes.at(ai).name);
    jc["attributes"] = names;
    j["categories"].push_back(std::move(jc));
  }
  return j;
}

Taxonomy Taxonomy::from_json(const nlohmann::ordered_json& j) {
  Taxonomy t;
  try {
    if (j.at("format_version").get<int>() != 1)
      fail(ErrorCategory::data, "taxonomy: unsupported format_version");
    const std::string style = j.at("style").get<std::string>();
    if (style == "fixed_length")
      t.style = Style::fixed_length;
    else if (style == "per_category")
      t.style = Style::per_category;
    else
      fail(ErrorCategory::data, "taxonomy: unknown style '" + style + "'");
    for (const auto& ja : j.at("attributes")) {
      AttributeSchema a;
      a.name = ja.at("name").get<std::string>();
      a.multi_valued = ja.at("multi_valued").get<bool>();
      if (a.multi_valued) a.values = ja.at("values").get<std::vector<std::string>>();
      t.attributes.push_back(std::move(a));
    }
    for (const auto& jc : j.at("categories")) {
      CategorySchema c;
      c.name = jc.at("name").get<std::string>();
      c.id = jc.at("id").get<int>();
      for (const auto& an : jc.at("attributes")) {
        const int ai = t.attribute_index(an.get<std::string>());
        if (ai < 0)
          fail(ErrorCategory::data, "taxonomy: category '" + c.name +
                                        "' references unknown attribute '" +
                                        an.get<std::string>() + "'");
        c.attrs.push_back(ai);
      }
      t.categories.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, std::string("taxonomy: malformed json: ") + e.what());
  }
  t.validate();
  return t;
}

std::string Taxonomy::canonical_text() const { return to_json().dump(2) + "\n"; }

uint64_t Taxonomy::hash() const { return fnv1a64(canonical_text()); }

void Taxonomy::save(const std::string& path) const {
  const std::string text = canonical_text();
  write_file_bytes(path, text.data(), text.size());
}

Taxonomy Taxonomy::load(const std::string& path) {
  auto bytes = read_file_bytes(path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, "taxonomy: cannot parse " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace glide
