// Checkpoint container: a restored model must be indistinguishable from the
// saved one (bitwise, through a real forward pass), re-saving must reproduce
// the file byte for byte, and mismatched or damaged containers are refused.
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "glide/base.hpp"
#include "glide/checkpoint.hpp"
#include "glide/glidenet.hpp"
#include "glide/io.hpp"
#include "glide/rng.hpp"

using namespace glide;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("glide_ckpt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

Taxonomy desk_taxonomy() {
  Taxonomy t;
  t.style = Taxonomy::Style::per_category;
  t.attributes = {
      {"color", true, {"red", "green", "blue", "yellow", "cyan", "magenta", "white", "gray"}},
      {"relative_size", true, {"not_largest", "largest"}},
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

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.stage_channels = {8, 12, 16};
  c.input_size = 64;
  c.blocks_per_stage = 1;
  c.profile = "tiny";
  return c;
}

ComposerConfig tiny_composer() {
  ComposerConfig c;
  c.mask_c1 = 2;
  c.mask_c2 = 4;
  c.cat_hidden = 8;
  c.up_c1 = 4;
  c.out_channels = 8;
  c.gate_c1 = 4;
  c.gate_c2 = 4;
  c.image_size = 64;
  return c;
}

InterpreterConfig tiny_interpreter() { return {0, 16, 8, 8}; }

DecoderConfig tiny_decoders() { return {4, 8, 4, 2}; }

GlideNet<float> tiny_net(uint64_t seed, Variant v = Variant::full) {
  return GlideNet<float>(desk_taxonomy(), v, tiny_backbone(), tiny_composer(), tiny_interpreter(),
                         tiny_decoders(), seed);
}

Tape<float>* const no_tape = nullptr;

// One synthetic Adam update per parameter so optimizer state is nonempty and
// parameter values move away from their seeded init.
void fake_train_step(ParamSet<float>& ps) {
  AdamConfig cfg;
  for (size_t i = 0; i < ps.params.size(); ++i) {
    auto& p = ps.params[i];
    std::vector<float> g(static_cast<size_t>(p.tensor->numel()));
    for (size_t k = 0; k < g.size(); ++k)
      g[k] = 0.001f * static_cast<float>((k + i) % 7 + 1);
    adam_step(*p.tensor, g, *p.state, cfg);
  }
}

struct Probe {
  Tensor<float> scene, crop, mask;
  std::vector<int> cats;
};

Probe make_probe() {
  Probe pr;
  Rng rng(99, "probe");
  auto rand4 = [&](Shape s) {
    Tensor<float> t = Tensor<float>::zeros(s);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(0, 1));
    return t;
  };
  pr.scene = rand4({2, 3, 64, 64});
  pr.crop = rand4({2, 3, 64, 64});
  pr.mask = Tensor<float>::zeros({2, 1, 64, 64});
  for (int n = 0; n < 2; ++n)
    for (int r = 16; r < 48; ++r)
      for (int c = 12; c < 40; ++c)
        pr.mask[(static_cast<int64_t>(n) * 64 + r) * 64 + c] = 1.0f;
  pr.cats = {2, 0};
  return pr;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.ptr(), b.ptr(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace

TEST_CASE("checkpoint round trip restores parameters, optimizer state and counters") {
  TempDir td("roundtrip");
  const std::string path = td.str() + "/ck.glck";
  Taxonomy tax = desk_taxonomy();

  GlideNet<float> net1 = tiny_net(11);
  fake_train_step(net1.params);
  std::vector<RngCursor> rng = {{"shuffle", 1234}, {"unclear", 7}};
  save_checkpoint(path, net1.params, tax, 2, 9, rng);
  REQUIRE(fs::exists(path));

  GlideNet<float> net2 = tiny_net(22);  // different init
  Probe pr = make_probe();
  auto before = net2.stage2_forward(pr.scene, pr.crop, pr.mask, pr.cats, false, no_tape);
  auto ref = net1.stage2_forward(pr.scene, pr.crop, pr.mask, pr.cats, false, no_tape);
  CHECK_FALSE(same_bits(before.cat_logits, ref.cat_logits));

  CheckpointState st = load_checkpoint(path, net2.params, tax);
  CHECK(st.stage == 2);
  CHECK(st.epoch == 9);
  REQUIRE(st.rng.size() == 2);
  CHECK(st.rng[0].name == "shuffle");
  CHECK(st.rng[0].counter == 1234);
  CHECK(st.rng[1].name == "unclear");
  CHECK(st.rng[1].counter == 7);

  // Bitwise identical parameters, buffers and optimizer state.
  REQUIRE(net1.params.params.size() == net2.params.params.size());
  for (size_t i = 0; i < net1.params.params.size(); ++i) {
    const auto& a = net1.params.params[i];
    const auto& b = net2.params.params[i];
    CHECK(same_bits(*a.tensor, *b.tensor));
    CHECK(a.state->step == b.state->step);
    CHECK(a.state->m == b.state->m);
    CHECK(a.state->v == b.state->v);
  }
  for (size_t i = 0; i < net1.params.buffers.size(); ++i)
    CHECK(same_bits(*net1.params.buffers[i].tensor, *net2.params.buffers[i].tensor));

  // The restored model computes exactly what the saved one computes.
  auto after = net2.stage2_forward(pr.scene, pr.crop, pr.mask, pr.cats, false, no_tape);
  CHECK(same_bits(after.cat_logits, ref.cat_logits));
  CHECK(same_bits(after.fused, ref.fused));
  REQUIRE(after.attrs.size() == ref.attrs.size());
  for (size_t i = 0; i < ref.attrs.size(); ++i) CHECK(same_bits(after.attrs[i], ref.attrs[i]));
}

TEST_CASE("save, load, save again is byte identical") {
  TempDir td("bytes");
  Taxonomy tax = desk_taxonomy();
  GlideNet<float> net1 = tiny_net(31);
  fake_train_step(net1.params);
  fake_train_step(net1.params);  // step=2: bias-correction state differs from 1

  std::vector<RngCursor> rng = {{"shuffle", 55}};
  const std::string p1 = td.str() + "/a.glck", p2 = td.str() + "/b.glck";
  save_checkpoint(p1, net1.params, tax, 1, 14, rng);

  GlideNet<float> net2 = tiny_net(32);
  CheckpointState st = load_checkpoint(p1, net2.params, tax);
  save_checkpoint(p2, net2.params, tax, st.stage, st.epoch, st.rng);

  auto b1 = read_file_bytes(p1);
  auto b2 = read_file_bytes(p2);
  REQUIRE(b1.size() == b2.size());
  CHECK(b1 == b2);
}

TEST_CASE("mismatched taxonomy or layout is refused") {
  TempDir td("refuse");
  const std::string path = td.str() + "/ck.glck";
  Taxonomy tax = desk_taxonomy();
  GlideNet<float> net1 = tiny_net(41);
  save_checkpoint(path, net1.params, tax, 1, 0, {});

  // Different taxonomy: hash differs, load must refuse before touching params.
  Taxonomy other = desk_taxonomy();
  other.attributes[0].values[0] = "crimson";
  REQUIRE(other.hash() != tax.hash());
  GlideNet<float> net_other(other, Variant::full, tiny_backbone(), tiny_composer(),
                            tiny_interpreter(), tiny_decoders(), 42);
  CHECK_THROWS_AS(load_checkpoint(path, net_other.params, other), Error);

  // Same taxonomy but different module layout (ablated variant).
  GlideNet<float> net_ablated = tiny_net(43, Variant::no_ife);
  CHECK_THROWS_AS(load_checkpoint(path, net_ablated.params, tax), Error);
}

TEST_CASE("inspect summarizes a container without a model") {
  TempDir td("inspect");
  const std::string path = td.str() + "/ck.glck";
  Taxonomy tax = desk_taxonomy();
  GlideNet<float> net = tiny_net(51);
  fake_train_step(net.params);
  save_checkpoint(path, net.params, tax, 2, 3, {{"shuffle", 10}, {"unclear", 20}});

  CheckpointMeta meta = inspect_checkpoint(path);
  CHECK(meta.format_version == 1);
  CHECK(meta.taxonomy_hash == tax.hash());
  CHECK(meta.stage == 2);
  CHECK(meta.epoch == 3);
  REQUIRE(meta.rng.size() == 2);
  CHECK(meta.rng[1].name == "unclear");
  CHECK(meta.rng[1].counter == 20);
  CHECK(meta.params.size() == net.params.params.size());
  CHECK(meta.buffers.size() == net.params.buffers.size());
  int64_t scalars = 0;
  for (const auto& e : meta.params) {
    int64_t n = 1;
    for (int d : e.shape) n *= d;
    scalars += n;
    CHECK(e.dtype == 0);  // f32
    CHECK(e.adam_step == 1);
    CHECK(e.has_state);
  }
  CHECK(scalars == net.params.count());

  // Every registered name appears in the stable registration order.
  for (size_t i = 0; i < meta.params.size(); ++i)
    CHECK(meta.params[i].name == net.params.params[i].name);

  const std::string text = checkpoint_summary(meta);
  CHECK(text.find("format version 1") != std::string::npos);
  CHECK(text.find("stage 2") != std::string::npos);
  CHECK(text.find(meta.params[0].name) != std::string::npos);
  CHECK(text.find("shuffle") != std::string::npos);
}

TEST_CASE("corrupt containers are rejected") {
  TempDir td("corrupt");
  const std::string path = td.str() + "/ck.glck";
  Taxonomy tax = desk_taxonomy();
  GlideNet<float> net = tiny_net(61);
  save_checkpoint(path, net.params, tax, 1, 1, {});
  auto bytes = read_file_bytes(path);

  // Truncated file.
  write_file_bytes(path, bytes.data(), bytes.size() / 2);
  GlideNet<float> sink = tiny_net(62);
  CHECK_THROWS_AS(load_checkpoint(path, sink.params, tax), Error);
  CHECK_THROWS_AS(inspect_checkpoint(path), Error);

  // Wrong magic.
  auto bad = bytes;
  bad[0] = 'X';
  write_file_bytes(path, bad.data(), bad.size());
  CHECK_THROWS_AS(load_checkpoint(path, sink.params, tax), Error);
  CHECK_THROWS_AS(inspect_checkpoint(path), Error);

  // Trailing garbage.
  auto trail = bytes;
  trail.push_back(0);
  write_file_bytes(path, trail.data(), trail.size());
  CHECK_THROWS_AS(load_checkpoint(path, sink.params, tax), Error);
}
