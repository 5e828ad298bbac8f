// Taxonomy, configuration, and dataset-manifest round trips: the structured
// files that define head widths, encodings, and training runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "glide/config.hpp"
#include "glide/dataset.hpp"
#include "glide/io.hpp"
#include "glide/rng.hpp"
#include "glide/taxonomy.hpp"

using namespace glide;
namespace fs = std::filesystem;

namespace {

Taxonomy desk_taxonomy() {
  Taxonomy t;
  t.style = Taxonomy::Style::per_category;
  t.attributes = {
      {"color", true, {"red", "green", "blue", "yellow", "cyan", "magenta", "white", "gray"}},
      {"relative_size", true, {"small", "large"}},
      {"occluded", true, {"no", "yes"}},
      {"orientation", true, {"north", "east", "south", "west"}},
  };
  t.categories = {
      {"block", 0, {0, 1, 2}},
      {"disk", 1, {0, 1, 2}},
      {"pole", 2, {0, 1, 2, 3}},
      {"strip", 3, {0, 1, 2, 3}},
  };
  return t;
}

Taxonomy binary_taxonomy() {
  Taxonomy t;
  t.style = Taxonomy::Style::fixed_length;
  t.attributes = {{"red", false, {}}, {"round", false, {}}, {"tall", false, {}}};
  t.categories = {{"a", 0, {0, 1, 2}}, {"b", 1, {0, 1, 2}}};
  return t;
}

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("glide_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

}  // namespace

TEST_CASE("taxonomy derives widths, offsets and groups from its structure") {
  Taxonomy t = desk_taxonomy();
  t.validate();
  CHECK(t.num_categories() == 4);
  CHECK(t.num_attributes() == 4);
  // Union layout: color(8) + relative_size(2) + occluded(2) + orientation(4).
  CHECK(t.union_width() == 16);
  CHECK(t.union_offset(0) == 0);
  CHECK(t.union_offset(1) == 8);
  CHECK(t.union_offset(2) == 10);
  CHECK(t.union_offset(3) == 12);
  // Per-category encodings.
  CHECK(t.n_c(0) == 12);  // block: color + size + occluded
  CHECK(t.n_c(1) == 12);
  CHECK(t.n_c(2) == 16);  // pole adds orientation
  CHECK(t.n_c(3) == 16);

  auto groups = t.category_groups(2);
  REQUIRE(groups.size() == 4);
  CHECK(groups[0] == std::pair<int, int>{0, 8});
  CHECK(groups[1] == std::pair<int, int>{8, 2});
  CHECK(groups[2] == std::pair<int, int>{10, 2});
  CHECK(groups[3] == std::pair<int, int>{12, 4});

  auto segs = t.union_segments(0);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].cat_off == 0);
  CHECK(segs[0].union_off == 0);
  CHECK(segs[0].len == 8);
  CHECK(segs[2].cat_off == 10);
  CHECK(segs[2].union_off == 10);
  CHECK(segs[2].len == 2);

  CHECK(t.attribute_index("orientation") == 3);
  CHECK(t.attribute_index("nope") == -1);
  CHECK(t.category_index("pole") == 2);
}

TEST_CASE("fixed-length taxonomy gives every category the same width") {
  Taxonomy t = binary_taxonomy();
  t.validate();
  CHECK(t.union_width() == 3);
  for (int c = 0; c < t.num_categories(); ++c) CHECK(t.n_c(c) == 3);
  auto groups = t.category_groups(0);
  REQUIRE(groups.size() == 3);
  CHECK(groups[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("taxonomy canonical text round-trips byte-identically") {
  TempDir dir("tax");
  Taxonomy t = desk_taxonomy();
  const std::string before = t.canonical_text();
  t.save(dir.str() + "/taxonomy.json");
  Taxonomy loaded = Taxonomy::load(dir.str() + "/taxonomy.json");
  CHECK(loaded.canonical_text() == before);
  CHECK(loaded.hash() == t.hash());
  CHECK(slurp(dir.str() + "/taxonomy.json") == before);

  // The hash is sensitive to content, not only shape.
  Taxonomy other = desk_taxonomy();
  other.attributes[0].values[0] = "crimson";
  CHECK(other.hash() != t.hash());
}

TEST_CASE("taxonomy validation rejects malformed structures") {
  auto expect_data_error = [](Taxonomy t, const char* what) {
    INFO(what);
    CHECK_THROWS_AS(t.validate(), Error);
    try {
      t.validate();
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::data);
    }
  };

  Taxonomy dup = desk_taxonomy();
  dup.attributes[1].name = "color";
  expect_data_error(dup, "duplicate attribute name");

  Taxonomy sparse = desk_taxonomy();
  sparse.categories[2].id = 7;
  expect_data_error(sparse, "non-dense category ids");

  Taxonomy tiny = desk_taxonomy();
  tiny.attributes[3].values = {"north"};
  expect_data_error(tiny, "multi-valued attribute with one value");

  Taxonomy binval = desk_taxonomy();
  binval.attributes[0].multi_valued = false;
  expect_data_error(binval, "binary attribute with values");

  Taxonomy repeat = desk_taxonomy();
  repeat.categories[0].attrs = {0, 0, 1};
  expect_data_error(repeat, "repeated attribute in category");

  Taxonomy badfixed = binary_taxonomy();
  badfixed.categories[0].attrs = {0, 2, 1};
  expect_data_error(badfixed, "fixed-length category must use pool order");

  Taxonomy oob = desk_taxonomy();
  oob.categories[0].attrs = {0, 1, 9};
  expect_data_error(oob, "attribute index out of range");
}

TEST_CASE("loss weights default to the cross-validated values") {
  LossWeights w;
  CHECK(w.gp0 == 1.0);
  CHECK(w.gp == 0.01);
  CHECK(w.gd == 0.5);
  CHECK(w.gc == 0.5);
  CHECK(w.lm == 0.1);
  CHECK(w.lc == 0.01);
  CHECK(w.la == 1.0);
  CHECK(w.ia == 1.0);
  CHECK(w.lc2 == 0.01);
}

TEST_CASE("train config round-trips and rejects unknown keys") {
  TempDir dir("cfg");
  TrainConfig c;
  c.stage1_epochs = 3;
  c.stage2_epochs = 2;
  c.lr = 2e-3;
  c.seed = 42;
  c.variant = Variant::no_ife;
  c.weights.la = 0.25;
  const std::string path = dir.str() + "/train.json";
  c.save(path);
  TrainConfig r = TrainConfig::load(path);
  CHECK(r.stage1_epochs == 3);
  CHECK(r.stage2_epochs == 2);
  CHECK(r.lr == 2e-3);
  CHECK(r.seed == 42);
  CHECK(r.variant == Variant::no_ife);
  CHECK(r.weights.la == 0.25);
  CHECK(r.batch_size == c.batch_size);
  // Serialization is stable.
  r.save(dir.str() + "/again.json");
  CHECK(slurp(dir.str() + "/again.json") == slurp(path));

  // Unknown keys are config errors, not silent no-ops.
  {
    std::ofstream f(dir.str() + "/bad.json");
    f << "{\"format_version\":1,\"stage1_epoch\":3}\n";
  }
  CHECK_THROWS_AS(TrainConfig::load(dir.str() + "/bad.json"), Error);
  try {
    TrainConfig::load(dir.str() + "/bad.json");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::config);
  }
}

TEST_CASE("variant names round-trip and unknown names fail with config error") {
  for (Variant v : all_variants()) CHECK(variant_from_name(variant_name(v)) == v);
  CHECK_THROWS_AS(variant_from_name("no_such_variant"), Error);
}

TEST_CASE("generator spec defaults match the benchmark layout") {
  GeneratorSpec s = GeneratorSpec::desk_default();
  s.validate();
  CHECK(s.image_size == 224);
  CHECK(s.min_objects == 1);
  CHECK(s.max_objects == 5);
  CHECK(s.min_visibility == 0.4);
  CHECK(s.unclear_prob == 0.1);
  REQUIRE(s.train_counts.size() == 4);
  REQUIRE(s.val_counts.size() == 4);
  int train_total = 0, val_total = 0;
  for (auto& [cat, n] : s.train_counts) {
    CHECK(n == 500);
    train_total += n;
  }
  for (auto& [cat, n] : s.val_counts) {
    CHECK(n == 125);
    val_total += n;
  }
  CHECK(train_total == 2000);
  CHECK(val_total == 500);

  TempDir dir("gen");
  s.save(dir.str() + "/gen.json");
  GeneratorSpec r = GeneratorSpec::load(dir.str() + "/gen.json");
  CHECK(r.to_json() == s.to_json());
}

TEST_CASE("dataset manifest write -> read -> write is byte-identical") {
  TempDir dir("ds");
  Dataset d;
  d.root = dir.str();
  d.taxonomy = desk_taxonomy();

  Rng rng(5, "data");
  int id = 0;
  for (int scene = 0; scene < 3; ++scene) {
    const int k = 1 + static_cast<int>(rng.below(3));
    for (int j = 0; j < k; ++j) {
      InstanceRecord r;
      r.id = id++;
      r.scene = scene;
      r.image_path = "blobs/scene" + std::to_string(scene) + ".gltn";
      r.mask_path = "blobs/mask" + std::to_string(r.id) + ".gltn";
      r.category = static_cast<int>(rng.below(4));
      const int w = d.taxonomy.n_c(r.category);
      r.values.assign(w, 0.0);
      r.supervised.assign(w, 1);
      for (auto [off, len] : d.taxonomy.category_groups(r.category)) {
        r.values[off + static_cast<int>(rng.below(len))] = 1.0;
      }
      r.provenance = "synthetic";
      d.instances.push_back(std::move(r));
    }
  }
  d.validate();
  d.save();
  const std::string first = slurp(dir.str() + "/manifest.json");

  Dataset loaded = Dataset::load(dir.str());
  CHECK(loaded.instances.size() == d.instances.size());
  loaded.save();
  CHECK(slurp(dir.str() + "/manifest.json") == first);
  CHECK(loaded.manifest_text() == first);

  // The scene index groups instances by scene id.
  REQUIRE(loaded.scene_instances.size() == 3);
  size_t total = 0;
  for (const auto& v : loaded.scene_instances) total += v.size();
  CHECK(total == loaded.instances.size());
  for (size_t s = 0; s < loaded.scene_instances.size(); ++s)
    for (int idx : loaded.scene_instances[s])
      CHECK(loaded.instances[static_cast<size_t>(idx)].scene == static_cast<int>(s));
}

TEST_CASE("dataset validation rejects broken records") {
  Dataset d;
  d.taxonomy = desk_taxonomy();

  auto base_record = [&]() {
    InstanceRecord r;
    r.id = 0;
    r.scene = 0;
    r.image_path = "a.gltn";
    r.mask_path = "b.gltn";
    r.category = 0;
    r.values.assign(12, 0.0);
    r.supervised.assign(12, 1);
    r.values[0] = 1.0;   // color = red
    r.values[8] = 1.0;   // size = small
    r.values[10] = 1.0;  // occluded = no
    return r;
  };

  auto expect_data_error = [&](Dataset ds, const char* what) {
    INFO(what);
    bool threw = false;
    try {
      ds.validate();
    } catch (const Error& e) {
      threw = true;
      CHECK(e.category() == ErrorCategory::data);
    }
    CHECK(threw);
  };

  {
    Dataset ds = d;
    auto r = base_record();
    r.category = 9;
    ds.instances.push_back(r);
    expect_data_error(ds, "category out of range");
  }
  {
    Dataset ds = d;
    auto r = base_record();
    r.values.resize(7);
    r.supervised.resize(7);
    ds.instances.push_back(r);
    expect_data_error(ds, "wrong target length");
  }
  {
    Dataset ds = d;
    auto r = base_record();
    r.supervised[1] = 0;  // color group partially supervised
    ds.instances.push_back(r);
    expect_data_error(ds, "partially supervised group");
  }
  {
    Dataset ds = d;
    auto r = base_record();
    r.values[1] = 1.0;  // two positives in the color group
    ds.instances.push_back(r);
    expect_data_error(ds, "two positives in a one-hot group");
  }
  {
    Dataset ds = d;
    auto r = base_record();
    for (int i = 0; i < 8; ++i) {
      r.values[i] = 0.0;  // no positive in a supervised group
    }
    ds.instances.push_back(r);
    expect_data_error(ds, "no positive in a supervised group");
  }
  {
    Dataset ds = d;
    ds.instances.push_back(base_record());
    ds.instances.push_back(base_record());  // duplicate id
    expect_data_error(ds, "duplicate ids");
  }
  {
    // A fully unsupervised group is legal.
    Dataset ds = d;
    auto r = base_record();
    for (int i = 0; i < 8; ++i) {
      r.values[i] = 0.0;
      r.supervised[i] = 0;
    }
    ds.instances.push_back(r);
    ds.validate();
  }
}
