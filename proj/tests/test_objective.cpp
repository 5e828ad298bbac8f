// Training-objective tests: detection-target geometry, target re-encoding,
// and every loss term checked against hand-evaluated oracles. Supervision
// masking is verified bitwise: unsupervised entries must not move the loss or
// the gradient by even one ulp.

#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "doctest.h"
#include "glide/layers.hpp"
#include "glide/objective.hpp"
#include "glide/optimizer.hpp"
#include "glide/rng.hpp"

using namespace glide;

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

template <class T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.ptr(), b.ptr(), sizeof(T) * static_cast<size_t>(a.numel())) == 0;
}

// One-hot category-encoded attribute targets for the desk taxonomy, given the
// chosen index per carried attribute group and a per-group supervision flag.
AttrTargets<double> cat_encoded(const Taxonomy& tax, int category, const std::vector<int>& pick,
                                const std::vector<int>& sup) {
  const auto groups = tax.category_groups(category);
  REQUIRE(pick.size() == groups.size());
  REQUIRE(sup.size() == groups.size());
  AttrTargets<double> t;
  t.values.assign(static_cast<size_t>(tax.n_c(category)), 0.0);
  t.supervised.assign(static_cast<size_t>(tax.n_c(category)), 0.0);
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto [off, len] = groups[g];
    if (sup[g]) {
      t.values[static_cast<size_t>(off + pick[g])] = 1.0;
      for (int i = 0; i < len; ++i) t.supervised[static_cast<size_t>(off + i)] = 1.0;
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Detection targets
// ---------------------------------------------------------------------------

TEST_CASE("detection targets place objects in centroid cells with exact offsets") {
  // 16px image on a 2x2 grid: 8px cells.
  SceneObject a{1, 3.0, 1.0, 6.0, 4.0, 24.0};       // cell (0,0)
  SceneObject b{0, 3.2, 2.0, 2.0, 2.0, 4.0};        // same cell, smaller
  SceneObject c{3, 15.999, 8.0, 2.0, 2.0, 4.0};     // clamps/floors to cell (1,1)
  std::vector<std::vector<SceneObject>> scenes = {{a, b, c}, {b, a, c}, {}};

  auto t = build_detection_targets<double>(scenes, 2, 16);
  CHECK(t.p0.shape == Shape({3, 1, 2, 2}));

  // Scene 0 and scene 1 differ only in insertion order: the area rule must
  // make them identical.
  for (int n = 0; n < 2; ++n) {
    const int64_t base = static_cast<int64_t>(n) * 4;
    CHECK(t.p0[base + 0] == 1.0);
    CHECK(t.p0[base + 1] == 0.0);
    CHECK(t.p0[base + 2] == 0.0);
    CHECK(t.p0[base + 3] == 1.0);
    CHECK(t.center_mask[base + 0] == 1.0);
    CHECK(t.center_mask[base + 3] == 1.0);
    // Cell (0,0) belongs to object a: category 1, centroid (3,1), bbox 6x4.
    CHECK(t.category[static_cast<size_t>(base) + 0] == 1);
    CHECK(t.cx[base + 0] == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
    CHECK(t.cy[base + 0] == doctest::Approx(3.0 / 8.0).epsilon(1e-12));
    CHECK(t.w[base + 0] == doctest::Approx(4.0 / 16.0).epsilon(1e-12));
    CHECK(t.h[base + 0] == doctest::Approx(6.0 / 16.0).epsilon(1e-12));
    // Cell (1,1) belongs to object c; its column centroid sits exactly on the
    // cell boundary, giving offset 0.
    CHECK(t.category[static_cast<size_t>(base) + 3] == 3);
    CHECK(t.cx[base + 3] == doctest::Approx(0.0));
    CHECK(t.cy[base + 3] == doctest::Approx(15.999 / 8.0 - 1.0).epsilon(1e-9));
  }

  // Empty scene: nothing marked.
  for (int i = 0; i < 4; ++i) {
    CHECK(t.p0[8 + i] == 0.0);
    CHECK(t.center_mask[8 + i] == 0.0);
  }
}

// ---------------------------------------------------------------------------
// Target encodings
// ---------------------------------------------------------------------------

TEST_CASE("union re-encoding keeps carried groups and leaves the rest unsupervised") {
  Taxonomy tax = desk_taxonomy();

  // Pole carries all four attributes; its category encoding aligns with the
  // union layout.
  std::vector<double> v(16, 0.0), s(16, 1.0);
  v[3] = 1.0; v[9] = 1.0; v[10] = 1.0; v[14] = 1.0;
  auto u = encode_union_targets<double>(v, s, 2, tax);
  REQUIRE(u.values.size() == 16);
  for (int i = 0; i < 16; ++i) {
    CHECK(u.values[static_cast<size_t>(i)] == v[static_cast<size_t>(i)]);
    CHECK(u.supervised[static_cast<size_t>(i)] == 1.0);
  }

  // Block carries color/size/occluded only: the orientation slots of the
  // union encoding must stay unsupervised no matter what.
  std::vector<double> bv(12, 0.0), bs(12, 1.0);
  bv[0] = 1.0; bv[8] = 1.0; bv[11] = 1.0;
  auto ub = encode_union_targets<double>(bv, bs, 0, tax);
  CHECK(ub.values[0] == 1.0);
  CHECK(ub.values[8] == 1.0);
  CHECK(ub.values[11] == 1.0);
  for (int i = 12; i < 16; ++i) {
    CHECK(ub.values[static_cast<size_t>(i)] == 0.0);
    CHECK(ub.supervised[static_cast<size_t>(i)] == 0.0);
  }
  for (int i = 0; i < 12; ++i) CHECK(ub.supervised[static_cast<size_t>(i)] == 1.0);
}

TEST_CASE("grouped targets take the argmax and the group supervision flag") {
  std::vector<std::pair<int, int>> groups = {{0, 3}, {3, 2}};
  std::vector<double> values = {0, 1, 0, 1, 0};
  std::vector<double> supervised = {1, 1, 1, 0, 0};
  auto g = group_targets(groups, values, supervised);
  CHECK(g.index == std::vector<int>({1, 0}));
  CHECK(g.supervised == std::vector<char>({1, 0}));
}

// ---------------------------------------------------------------------------
// Loss oracles (hand-evaluated, double precision)
// ---------------------------------------------------------------------------

TEST_CASE("detection loss matches the hand-computed term values") {
  // One object on a 2x2 grid over a 16px image, category 1 of 2.
  std::vector<std::vector<SceneObject>> scenes = {{{1, 3.0, 1.0, 6.0, 4.0, 24.0}}};
  auto tgt = build_detection_targets<double>(scenes, 2, 16);

  Tensor<double> pred = Tensor<double>::zeros({1, 7, 2, 2});
  const double conf_cells[4] = {0.8, 0.3, 0.2, 0.9};
  for (int i = 0; i < 4; ++i) {
    pred[0 * 4 + i] = conf_cells[i];  // confidence
    pred[1 * 4 + i] = 0.4;            // cx
    pred[2 * 4 + i] = 0.7;            // cy
    pred[3 * 4 + i] = 0.1;            // w
    pred[4 * 4 + i] = 0.5;            // h
    pred[5 * 4 + i] = 0.3;            // category 0
    pred[6 * 4 + i] = 0.7;            // category 1
  }

  LossWeights w;
  w.gp0 = 2.0; w.gp = 3.0; w.gd = 0.5; w.gc = 1.5;
  auto r = loss_gfe<double>(pred, tgt, w, nullptr);

  const double conf =
      -(std::log(0.8) + std::log(0.7) + std::log(0.8) + std::log(0.1)) / 4.0;
  const double cat = -std::log(0.7);
  const double dcx = (0.4 - 0.125) * (0.4 - 0.125);
  const double dcy = (0.7 - 0.375) * (0.7 - 0.375);
  const double dw = (0.1 - 0.25) * (0.1 - 0.25);
  const double dh = (0.5 - 0.375) * (0.5 - 0.375);

  CHECK(r.terms.at("g_conf") == doctest::Approx(conf).epsilon(1e-9));
  CHECK(r.terms.at("g_cat") == doctest::Approx(cat).epsilon(1e-9));
  CHECK(r.terms.at("g_dims") == doctest::Approx(dh + dw).epsilon(1e-9));
  CHECK(r.terms.at("g_center") == doctest::Approx(dcx + dcy).epsilon(1e-9));
  const double total = 2.0 * conf + 3.0 * cat + 0.5 * (dh + dw) + 1.5 * (dcx + dcy);
  CHECK(r.total[0] == doctest::Approx(total).epsilon(1e-9));
  CHECK(r.terms.at("g_total") == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("detection loss with no objects reduces to the confidence term") {
  std::vector<std::vector<SceneObject>> scenes = {{}};
  auto tgt = build_detection_targets<double>(scenes, 2, 16);
  Tensor<double> pred = Tensor<double>::full({1, 7, 2, 2}, 0.25);
  LossWeights w;
  w.gp0 = 2.0;
  auto r = loss_gfe<double>(pred, tgt, w, nullptr);
  const double conf = -std::log(0.75);
  CHECK(r.terms.at("g_cat") == 0.0);
  CHECK(r.terms.at("g_dims") == 0.0);
  CHECK(r.terms.at("g_center") == 0.0);
  CHECK(r.total[0] == doctest::Approx(2.0 * conf).epsilon(1e-9));
}

TEST_CASE("local loss matches the hand-computed mask/category/attribute terms") {
  Taxonomy tax = desk_taxonomy();

  Tensor<double> mask_pred = Tensor<double>::zeros({2, 1, 2, 2});
  Tensor<double> mask_tgt = Tensor<double>::zeros({2, 1, 2, 2});
  const double mp[8] = {0.7, 0.2, 0.9, 0.4, 0.5, 0.5, 0.1, 0.8};
  const double mt[8] = {1, 0, 1, 0, 0, 1, 0, 1};
  for (int i = 0; i < 8; ++i) {
    mask_pred[i] = mp[i];
    mask_tgt[i] = mt[i];
  }
  double lm = 0;
  for (int i = 0; i < 8; ++i)
    lm += -(mt[i] * std::log(mp[i]) + (1 - mt[i]) * std::log(1 - mp[i]));
  lm /= 8;

  Tensor<double> cat_probs = Tensor<double>::zeros({2, 4});
  const double cp[8] = {0.1, 0.6, 0.2, 0.1, 0.25, 0.25, 0.4, 0.1};
  for (int i = 0; i < 8; ++i) cat_probs[i] = cp[i];
  const std::vector<int> cat_tgt = {1, 2};
  const double lc = (-std::log(0.6) - std::log(0.4)) / 2.0;

  // Union-encoded attribute predictions and targets. Row 0 is a pole: all
  // four groups supervised. Row 1 is a block: color and size supervised,
  // occluded explicitly unsupervised, orientation not carried at all.
  Tensor<double> attrs = Tensor<double>::full({2, 16}, 0.05);
  attrs[3] = 0.5; attrs[9] = 0.6; attrs[10] = 0.55; attrs[14] = 0.25;
  attrs[16 + 0] = 0.3; attrs[16 + 8] = 0.45;

  std::vector<double> pv(16, 0.0), psup(16, 1.0);
  pv[3] = 1.0; pv[9] = 1.0; pv[10] = 1.0; pv[14] = 1.0;
  std::vector<double> bv(12, 0.0), bsup(12, 1.0);
  bv[0] = 1.0; bv[8] = 1.0;
  bsup[10] = bsup[11] = 0.0;  // occluded unknown for this instance
  std::vector<AttrTargets<double>> attr_tgt = {
      encode_union_targets<double>(pv, psup, 2, tax),
      encode_union_targets<double>(bv, bsup, 0, tax),
  };
  const double la = (-std::log(0.5) - std::log(0.6) - std::log(0.55) - std::log(0.25) -
                     std::log(0.3) - std::log(0.45)) /
                    6.0;

  LossWeights w;
  w.lm = 2.0; w.lc = 0.5; w.la = 1.25;
  auto r = loss_lfe<double>(mask_pred, mask_tgt, cat_probs, cat_tgt, attrs, attr_tgt, tax, w,
                            nullptr);
  CHECK(r.terms.at("l_mask") == doctest::Approx(lm).epsilon(1e-9));
  CHECK(r.terms.at("l_cat") == doctest::Approx(lc).epsilon(1e-9));
  CHECK(r.terms.at("l_attr") == doctest::Approx(la).epsilon(1e-9));
  CHECK(r.total[0] == doctest::Approx(2.0 * lm + 0.5 * lc + 1.25 * la).epsilon(1e-9));

  // The intrinsic loss reuses the same attribute term under its own weight.
  LossWeights wi;
  wi.ia = 0.7;
  auto ri = loss_ife<double>(attrs, attr_tgt, tax, wi, nullptr);
  CHECK(ri.terms.at("i_attr") == doctest::Approx(la).epsilon(1e-9));
  CHECK(ri.total[0] == doctest::Approx(0.7 * la).epsilon(1e-9));

  // Stage-I total is the exact sum of the three stage losses.
  std::vector<std::vector<SceneObject>> scenes = {{{1, 3.0, 1.0, 6.0, 4.0, 24.0}}};
  auto dtgt = build_detection_targets<double>(scenes, 2, 16);
  Tensor<double> dpred = Tensor<double>::full({1, 7, 2, 2}, 0.25);
  auto rg = loss_gfe<double>(dpred, dtgt, w, nullptr);
  auto rs = stage1_total<double>(rg, r, ri, nullptr);
  CHECK(rs.total[0] ==
        doctest::Approx(rg.total[0] + r.total[0] + ri.total[0]).epsilon(1e-12));
  CHECK(rs.terms.count("g_conf") == 1);
  CHECK(rs.terms.count("l_mask") == 1);
  CHECK(rs.terms.count("i_attr") == 1);
  CHECK(rs.terms.at("stage1_total") == doctest::Approx(rs.total[0]).epsilon(1e-12));
}

TEST_CASE("stage-two loss matches the hand-computed routed attribute term") {
  Taxonomy tax = desk_taxonomy();
  const std::vector<int> cats = {2, 0};

  // Sample 0: pole prediction (width 16), all groups supervised.
  Tensor<double> p0 = Tensor<double>::full({1, 16}, 0.05);
  p0[2] = 0.4; p0[8] = 0.7; p0[11] = 0.35; p0[15] = 0.2;
  // Sample 1: block prediction (width 12), size group unsupervised.
  Tensor<double> p1 = Tensor<double>::full({1, 12}, 0.05);
  p1[5] = 0.15; p1[10] = 0.8;

  std::vector<AttrTargets<double>> tgt = {
      cat_encoded(tax, 2, {2, 0, 1, 3}, {1, 1, 1, 1}),
      cat_encoded(tax, 0, {5, 0, 0}, {1, 0, 1}),
  };
  const double attr = (-std::log(0.4) - std::log(0.7) - std::log(0.35) - std::log(0.2) -
                       std::log(0.15) - std::log(0.8)) /
                      6.0;

  Tensor<double> cat_probs = Tensor<double>::zeros({2, 4});
  const double cp[8] = {0.2, 0.3, 0.4, 0.1, 0.6, 0.2, 0.1, 0.1};
  for (int i = 0; i < 8; ++i) cat_probs[i] = cp[i];
  const double ce = (-std::log(0.4) - std::log(0.6)) / 2.0;

  LossWeights w;
  w.lc2 = 0.8;
  auto r = stage2_total<double>({p0, p1}, cats, tgt, cat_probs, cats, tax, w, nullptr);
  CHECK(r.terms.at("ii_attr") == doctest::Approx(attr).epsilon(1e-9));
  CHECK(r.terms.at("ii_cat") == doctest::Approx(ce).epsilon(1e-9));
  CHECK(r.total[0] == doctest::Approx(attr + 0.8 * ce).epsilon(1e-9));
}

TEST_CASE("fully unsupervised attribute batches contribute an exact zero") {
  Taxonomy tax = desk_taxonomy();
  Rng rng(5, "data");
  Tensor<double> pred = Tensor<double>::zeros({2, 16});
  for (int64_t i = 0; i < pred.numel(); ++i) pred[i] = rng.uniform(0.05, 0.95);
  std::vector<double> v(16, 0.0), s(16, 0.0);
  std::vector<AttrTargets<double>> tgt = {encode_union_targets<double>(v, s, 2, tax),
                                          encode_union_targets<double>(v, s, 2, tax)};
  Tensor<double> la =
      attribute_loss_rows<double>(pred, tgt, tax.union_groups(), tax.style, nullptr);
  CHECK(la[0] == 0.0);
}

// ---------------------------------------------------------------------------
// Masking exactness: unsupervised entries are bitwise inert
// ---------------------------------------------------------------------------

TEST_CASE("perturbing unsupervised attribute groups changes nothing, bit for bit") {
  Taxonomy tax = desk_taxonomy();
  Rng rng(9, "data");

  Tensor<double> pred = Tensor<double>::zeros({2, 16});
  for (int64_t i = 0; i < pred.numel(); ++i) pred[i] = rng.uniform(0.05, 0.95);

  // Row 0 pole: occluded group unsupervised. Row 1 block: only color
  // supervised; orientation not carried.
  std::vector<double> pv(16, 0.0), ps(16, 1.0);
  pv[1] = 1.0; pv[8] = 1.0; pv[10] = 1.0; pv[13] = 1.0;
  for (int i = 10; i < 12; ++i) { ps[static_cast<size_t>(i)] = 0.0; pv[static_cast<size_t>(i)] = 0.0; }
  std::vector<double> bv(12, 0.0), bs(12, 0.0);
  bv[6] = 1.0;
  for (int i = 0; i < 8; ++i) bs[static_cast<size_t>(i)] = 1.0;
  std::vector<AttrTargets<double>> tgt = {encode_union_targets<double>(pv, ps, 2, tax),
                                          encode_union_targets<double>(bv, bs, 0, tax)};

  auto run = [&](const Tensor<double>& p, Tensor<double>& loss_out, std::vector<double>& grad) {
    Tape<double> tape;
    Tensor<double> watched = p.clone();
    tape.watch(watched);
    loss_out = attribute_loss_rows<double>(watched, tgt, tax.union_groups(), tax.style, &tape);
    tape.backward(loss_out);
    grad = tape.grad_or_zeros(watched);
  };

  Tensor<double> base_loss, pert_loss;
  std::vector<double> base_grad, pert_grad;
  run(pred, base_loss, base_grad);

  // Scramble every entry of every unsupervised group.
  Tensor<double> perturbed = pred.clone();
  auto scramble = [&](int row, int off, int len) {
    for (int i = off; i < off + len; ++i)
      perturbed[static_cast<int64_t>(row) * 16 + i] = rng.uniform(0.05, 0.95);
  };
  scramble(0, 10, 2);                    // pole's occluded group
  scramble(1, 8, 2);                     // block's size group
  scramble(1, 10, 2);                    // block's occluded group
  scramble(1, 12, 4);                    // orientation, never carried by block
  run(perturbed, pert_loss, pert_grad);

  CHECK(same_bits(base_loss, pert_loss));
  REQUIRE(base_grad.size() == pert_grad.size());
  CHECK(std::memcmp(base_grad.data(), pert_grad.data(),
                    sizeof(double) * base_grad.size()) == 0);
}

TEST_CASE("perturbing non-center cells leaves regression and category losses untouched") {
  std::vector<std::vector<SceneObject>> scenes = {{{1, 3.0, 1.0, 6.0, 4.0, 24.0}}};
  auto tgt = build_detection_targets<double>(scenes, 2, 16);  // center cell (0,0)

  Rng rng(13, "data");
  Tensor<double> pred = Tensor<double>::zeros({1, 7, 2, 2});
  for (int64_t i = 0; i < pred.numel(); ++i) pred[i] = rng.uniform(0.1, 0.9);

  LossWeights w;
  auto run = [&](const Tensor<double>& p, LossResult<double>& out, std::vector<double>& grad) {
    Tape<double> tape;
    Tensor<double> watched = p.clone();
    tape.watch(watched);
    out = loss_gfe<double>(watched, tgt, w, &tape);
    tape.backward(out.total);
    grad = tape.grad_or_zeros(watched);
  };

  LossResult<double> base, pert;
  std::vector<double> base_grad, pert_grad;
  run(pred, base, base_grad);

  // Channels 1..6 (regression + category) at the three non-center cells are
  // outside every supervised term; only channel 0 (confidence) sees all cells.
  Tensor<double> perturbed = pred.clone();
  for (int ch = 1; ch < 7; ++ch)
    for (int cell = 1; cell < 4; ++cell)
      perturbed[static_cast<int64_t>(ch) * 4 + cell] = rng.uniform(0.1, 0.9);
  run(perturbed, pert, pert_grad);

  CHECK(same_bits(base.total, pert.total));
  CHECK(base.terms.at("g_cat") == pert.terms.at("g_cat"));
  CHECK(base.terms.at("g_dims") == pert.terms.at("g_dims"));
  CHECK(std::memcmp(base_grad.data(), pert_grad.data(),
                    sizeof(double) * base_grad.size()) == 0);
}

// ---------------------------------------------------------------------------
// Optimization sanity
// ---------------------------------------------------------------------------

TEST_CASE("a linear probe descends the grouped attribute loss") {
  Taxonomy tax = desk_taxonomy();
  ParamSet<double> ps;
  Rng rng(17, "init");
  Linear<double> probe(4, 16, rng, ps, "probe");

  Rng drng(18, "data");
  Tensor<double> x = Tensor<double>::zeros({2, 4});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = drng.uniform(-1.0, 1.0);

  std::vector<double> pv(16, 0.0), psup(16, 1.0);
  pv[4] = 1.0; pv[9] = 1.0; pv[11] = 1.0; pv[12] = 1.0;
  std::vector<double> dv(12, 0.0), dsup(12, 1.0);
  dv[2] = 1.0; dv[8] = 1.0; dv[10] = 1.0;
  std::vector<AttrTargets<double>> tgt = {encode_union_targets<double>(pv, psup, 2, tax),
                                          encode_union_targets<double>(dv, dsup, 1, tax)};

  AdamConfig cfg;
  cfg.lr = 0.05;
  double first = 0, last = 0;
  for (int step = 0; step < 40; ++step) {
    Tape<double> tape;
    ps.watch_all(tape);
    Tensor<double> probs = softmax_groups(probe.forward(x, &tape), tax.union_groups(), &tape);
    Tensor<double> loss =
        attribute_loss_rows<double>(probs, tgt, tax.union_groups(), tax.style, &tape);
    tape.backward(loss);
    if (step == 0) first = loss[0];
    last = loss[0];
    for (auto& p : ps.params) adam_step(*p.tensor, tape.grad_or_zeros(*p.tensor), *p.state, cfg);
    ps.unwatch_all();
  }
  CHECK(last < 0.3 * first);
}
