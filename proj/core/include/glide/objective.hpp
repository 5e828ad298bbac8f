#pragma once

#include <map>
#include <string>
#include <vector>

#include "glide/config.hpp"
#include "glide/ops.hpp"
#include "glide/taxonomy.hpp"

namespace glide {

// ---------------------------------------------------------------------------
// Detection targets
// ---------------------------------------------------------------------------

// Geometry of one object inside a scene, in source-image pixels. Centroids
// use pixel-center coordinates; bbox dimensions count covered pixels.
struct SceneObject {
  int category = 0;
  double centroid_r = 0, centroid_c = 0;
  double bbox_h = 0, bbox_w = 0;
  double area = 0;
};

template <class T>
struct DetectionTargets {
  Tensor<T> p0;           // [N,1,h,w] binary center-confidence targets
  Tensor<T> center_mask;  // [N,1,h,w] cells where regression/category terms apply
  Tensor<T> cx, cy, w, h; // [N,1,h,w] regression targets, defined at center cells
  std::vector<int> category;  // per cell (N*h*w), only read at center cells
};

// Each object marks the grid cell containing its mask centroid with
// confidence 1, cell-relative centroid offsets in (0,1), bbox dimensions as
// fractions of the image edge, and its category. When two objects land in the
// same cell the larger (by pixel area) keeps it.
template <class T>
DetectionTargets<T> build_detection_targets(const std::vector<std::vector<SceneObject>>& scenes,
                                            int grid, int image_size) {
  const int N = static_cast<int>(scenes.size());
  DetectionTargets<T> t;
  t.p0 = Tensor<T>::zeros({N, 1, grid, grid});
  t.center_mask = Tensor<T>::zeros({N, 1, grid, grid});
  t.cx = Tensor<T>::zeros({N, 1, grid, grid});
  t.cy = Tensor<T>::zeros({N, 1, grid, grid});
  t.w = Tensor<T>::zeros({N, 1, grid, grid});
  t.h = Tensor<T>::zeros({N, 1, grid, grid});
  t.category.assign(static_cast<size_t>(N) * grid * grid, 0);
  std::vector<double> owner_area(static_cast<size_t>(N) * grid * grid, -1.0);

  const double cell = static_cast<double>(image_size) / grid;
  for (int n = 0; n < N; ++n) {
    for (const auto& obj : scenes[static_cast<size_t>(n)]) {
      const int gr = std::min(grid - 1, static_cast<int>(obj.centroid_r / cell));
      const int gc = std::min(grid - 1, static_cast<int>(obj.centroid_c / cell));
      const int64_t idx = (static_cast<int64_t>(n) * grid + gr) * grid + gc;
      if (obj.area <= owner_area[idx]) continue;
      owner_area[idx] = obj.area;
      t.p0[idx] = T(1);
      t.center_mask[idx] = T(1);
      t.cx[idx] = static_cast<T>(obj.centroid_c / cell - gc);
      t.cy[idx] = static_cast<T>(obj.centroid_r / cell - gr);
      t.w[idx] = static_cast<T>(obj.bbox_w / image_size);
      t.h[idx] = static_cast<T>(obj.bbox_h / image_size);
      t.category[static_cast<size_t>(idx)] = obj.category;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Attribute targets
// ---------------------------------------------------------------------------

// Per-instance attribute targets in some encoding (category or union):
// the value vector plus a same-length supervision mask.
template <class T>
struct AttrTargets {
  std::vector<T> values;
  std::vector<T> supervised;
};

// Re-encode a category-encoded target (values/supervised of length n_c) into
// the union layout used by the LAE/IAE. Entries of attributes the category
// does not carry stay unsupervised.
template <class T, class V, class S>
AttrTargets<T> encode_union_targets(const std::vector<V>& values, const std::vector<S>& supervised,
                                    int category, const Taxonomy& tax) {
  AttrTargets<T> out;
  out.values.assign(static_cast<size_t>(tax.union_width()), T(0));
  out.supervised.assign(static_cast<size_t>(tax.union_width()), T(0));
  for (const auto& seg : tax.union_segments(category)) {
    for (int i = 0; i < seg.len; ++i) {
      out.values[static_cast<size_t>(seg.union_off + i)] =
          static_cast<T>(values[static_cast<size_t>(seg.cat_off + i)]);
      out.supervised[static_cast<size_t>(seg.union_off + i)] =
          static_cast<T>(supervised[static_cast<size_t>(seg.cat_off + i)]);
    }
  }
  return out;
}

// Grouped view of a target row: per group, the argmax index of the values and
// whether the group is supervised (its first entry's flag; validation
// guarantees per-group flags are uniform).
template <class T>
struct GroupedTargets {
  std::vector<std::pair<int, int>> groups;
  std::vector<int> index;
  std::vector<char> supervised;
};

template <class T>
GroupedTargets<T> group_targets(const std::vector<std::pair<int, int>>& groups,
                                const std::vector<T>& values, const std::vector<T>& supervised) {
  GroupedTargets<T> out;
  out.groups = groups;
  for (const auto& [off, len] : groups) {
    int best = 0;
    for (int i = 1; i < len; ++i)
      if (values[static_cast<size_t>(off + i)] > values[static_cast<size_t>(off + best)]) best = i;
    out.index.push_back(best);
    out.supervised.push_back(supervised[static_cast<size_t>(off)] > T(0) ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <class T>
struct LossResult {
  Tensor<T> total;  // scalar, on the tape
  std::map<std::string, double> terms;
};

// Attribute loss over a batch of rows in one shared encoding (LAE/IAE). For
// all-binary taxonomies this is masked BCE over every supervised entry; for
// grouped taxonomies, mean cross-entropy over supervised groups.
template <class T>
Tensor<T> attribute_loss_rows(const Tensor<T>& pred, const std::vector<AttrTargets<T>>& targets,
                              const std::vector<std::pair<int, int>>& groups, Taxonomy::Style style,
                              Tape<T>* tape) {
  const int N = pred.dim(0), W = pred.dim(1);
  check_shape(static_cast<int>(targets.size()) == N, "attribute_loss: target count mismatch");
  if (style == Taxonomy::Style::fixed_length) {
    Tensor<T> tv = Tensor<T>::zeros({N, W});
    Tensor<T> sv = Tensor<T>::zeros({N, W});
    for (int n = 0; n < N; ++n) {
      check_shape(static_cast<int>(targets[static_cast<size_t>(n)].values.size()) == W,
                  "attribute_loss: target width mismatch");
      std::copy_n(targets[static_cast<size_t>(n)].values.data(), W,
                  tv.ptr() + static_cast<int64_t>(n) * W);
      std::copy_n(targets[static_cast<size_t>(n)].supervised.data(), W,
                  sv.ptr() + static_cast<int64_t>(n) * W);
    }
    return bce_masked(pred, tv, sv, tape);
  }
  // Grouped style: weight each row's group-mean CE by its share of the
  // batch's supervised groups, so the result is the mean over all of them.
  std::vector<std::pair<T, Tensor<T>>> weighted;
  double total_groups = 0;
  std::vector<std::pair<double, Tensor<T>>> rows;
  for (int n = 0; n < N; ++n) {
    const auto& tgt = targets[static_cast<size_t>(n)];
    GroupedTargets<T> g = group_targets(groups, tgt.values, tgt.supervised);
    int count = 0;
    for (char s : g.supervised) count += s;
    if (count == 0) continue;
    Tensor<T> row = ce_grouped(slice_row(pred, n, tape), g.groups, g.index, g.supervised, tape);
    rows.emplace_back(count, row);
    total_groups += count;
  }
  if (rows.empty()) return Tensor<T>::zeros({1});
  for (auto& [cnt, row] : rows)
    weighted.emplace_back(static_cast<T>(cnt / total_groups), row);
  return weighted_sum_scalars(weighted, tape);
}

// Same, but for per-sample category-encoded predictions (interpreter output):
// each sample brings its own width and group layout.
template <class T>
Tensor<T> attribute_loss_routed(const std::vector<Tensor<T>>& preds, const std::vector<int>& cats,
                                const std::vector<AttrTargets<T>>& targets, const Taxonomy& tax,
                                Tape<T>* tape) {
  check_shape(preds.size() == targets.size() && preds.size() == cats.size(),
              "attribute_loss: size mismatch");
  if (tax.style == Taxonomy::Style::fixed_length) {
    std::vector<std::pair<double, Tensor<T>>> rows;
    double total = 0;
    for (size_t n = 0; n < preds.size(); ++n) {
      const int W = preds[n].dim(1);
      Tensor<T> tv = Tensor<T>::zeros({1, W});
      Tensor<T> sv = Tensor<T>::zeros({1, W});
      std::copy_n(targets[n].values.data(), W, tv.ptr());
      std::copy_n(targets[n].supervised.data(), W, sv.ptr());
      double count = 0;
      for (int i = 0; i < W; ++i) count += static_cast<double>(sv[i]);
      if (count == 0) continue;
      rows.emplace_back(count, bce_masked(preds[n], tv, sv, tape));
      total += count;
    }
    if (rows.empty()) return Tensor<T>::zeros({1});
    std::vector<std::pair<T, Tensor<T>>> weighted;
    for (auto& [cnt, row] : rows) weighted.emplace_back(static_cast<T>(cnt / total), row);
    return weighted_sum_scalars(weighted, tape);
  }
  std::vector<std::pair<double, Tensor<T>>> rows;
  double total = 0;
  for (size_t n = 0; n < preds.size(); ++n) {
    GroupedTargets<T> g =
        group_targets(tax.category_groups(cats[n]), targets[n].values, targets[n].supervised);
    int count = 0;
    for (char s : g.supervised) count += s;
    if (count == 0) continue;
    rows.emplace_back(count, ce_grouped(preds[n], g.groups, g.index, g.supervised, tape));
    total += count;
  }
  if (rows.empty()) return Tensor<T>::zeros({1});
  std::vector<std::pair<T, Tensor<T>>> weighted;
  for (auto& [cnt, row] : rows) weighted.emplace_back(static_cast<T>(cnt / total), row);
  return weighted_sum_scalars(weighted, tape);
}

// Detection loss: confidence BCE at every cell; category cross-entropy and
// the two regression pairs only at ground-truth center cells.
template <class T>
LossResult<T> loss_gfe(const Tensor<T>& pred, const DetectionTargets<T>& tgt,
                       const LossWeights& w, Tape<T>* tape) {
  const int c = pred.dim(1) - 5;
  check_shape(c >= 1, "loss_gfe: prediction needs c+5 channels");
  Tensor<T> ones = Tensor<T>::full(tgt.p0.shape, T(1));

  Tensor<T> conf = bce_masked(slice_channels(pred, 0, 1, tape), tgt.p0, ones, tape);
  Tensor<T> cat =
      ce_cells(slice_channels(pred, 5, 5 + c, tape), tgt.category, tgt.center_mask, tape);
  Tensor<T> dcx = mse_masked(slice_channels(pred, 1, 2, tape), tgt.cx, tgt.center_mask, tape);
  Tensor<T> dcy = mse_masked(slice_channels(pred, 2, 3, tape), tgt.cy, tgt.center_mask, tape);
  Tensor<T> dw = mse_masked(slice_channels(pred, 3, 4, tape), tgt.w, tgt.center_mask, tape);
  Tensor<T> dh = mse_masked(slice_channels(pred, 4, 5, tape), tgt.h, tgt.center_mask, tape);

  LossResult<T> out;
  out.total = weighted_sum_scalars<T>({{static_cast<T>(w.gp0), conf},
                                       {static_cast<T>(w.gp), cat},
                                       {static_cast<T>(w.gd), dh},
                                       {static_cast<T>(w.gd), dw},
                                       {static_cast<T>(w.gc), dcx},
                                       {static_cast<T>(w.gc), dcy}},
                                      tape);
  out.terms["g_conf"] = static_cast<double>(conf[0]);
  out.terms["g_cat"] = static_cast<double>(cat[0]);
  out.terms["g_dims"] = static_cast<double>(dh[0] + dw[0]);
  out.terms["g_center"] = static_cast<double>(dcx[0] + dcy[0]);
  out.terms["g_total"] = static_cast<double>(out.total[0]);
  return out;
}

// Local-extractor loss: mask BCE, category CE, attribute term.
template <class T>
LossResult<T> loss_lfe(const Tensor<T>& mask_pred, const Tensor<T>& mask_tgt,
                       const Tensor<T>& cat_probs, const std::vector<int>& cat_tgt,
                       const Tensor<T>& attr_pred, const std::vector<AttrTargets<T>>& attr_tgt,
                       const Taxonomy& tax, const LossWeights& w, Tape<T>* tape) {
  Tensor<T> ones = Tensor<T>::full(mask_tgt.shape, T(1));
  std::vector<T> row_ones(static_cast<size_t>(cat_probs.dim(0)), T(1));

  Tensor<T> lm = bce_masked(mask_pred, mask_tgt, ones, tape);
  Tensor<T> lc = ce_rows(cat_probs, cat_tgt, row_ones, tape);
  Tensor<T> la = attribute_loss_rows(attr_pred, attr_tgt, tax.union_groups(), tax.style, tape);

  LossResult<T> out;
  out.total = weighted_sum_scalars<T>({{static_cast<T>(w.lm), lm},
                                       {static_cast<T>(w.lc), lc},
                                       {static_cast<T>(w.la), la}},
                                      tape);
  out.terms["l_mask"] = static_cast<double>(lm[0]);
  out.terms["l_cat"] = static_cast<double>(lc[0]);
  out.terms["l_attr"] = static_cast<double>(la[0]);
  out.terms["l_total"] = static_cast<double>(out.total[0]);
  return out;
}

// Intrinsic-extractor loss: the attribute term alone.
template <class T>
LossResult<T> loss_ife(const Tensor<T>& attr_pred, const std::vector<AttrTargets<T>>& attr_tgt,
                       const Taxonomy& tax, const LossWeights& w, Tape<T>* tape) {
  Tensor<T> li = attribute_loss_rows(attr_pred, attr_tgt, tax.union_groups(), tax.style, tape);
  LossResult<T> out;
  out.total = weighted_sum_scalars<T>({{static_cast<T>(w.ia), li}}, tape);
  out.terms["i_attr"] = static_cast<double>(li[0]);
  out.terms["i_total"] = static_cast<double>(out.total[0]);
  return out;
}

// Stage-I training objective: the exact sum of the three extractor losses.
template <class T>
LossResult<T> stage1_total(const LossResult<T>& g, const LossResult<T>& l, const LossResult<T>& i,
                           Tape<T>* tape) {
  LossResult<T> out;
  out.total = weighted_sum_scalars<T>({{T(1), g.total}, {T(1), l.total}, {T(1), i.total}}, tape);
  out.terms = g.terms;
  out.terms.insert(l.terms.begin(), l.terms.end());
  out.terms.insert(i.terms.begin(), i.terms.end());
  out.terms["stage1_total"] = static_cast<double>(out.total[0]);
  return out;
}

// Stage-II objective: routed attribute loss plus the category-embedding term.
template <class T>
LossResult<T> stage2_total(const std::vector<Tensor<T>>& attr_preds, const std::vector<int>& cats,
                           const std::vector<AttrTargets<T>>& attr_tgt, const Tensor<T>& cat_probs,
                           const std::vector<int>& cat_tgt, const Taxonomy& tax,
                           const LossWeights& w, Tape<T>* tape) {
  std::vector<T> row_ones(static_cast<size_t>(cat_probs.dim(0)), T(1));
  Tensor<T> attr = attribute_loss_routed(attr_preds, cats, attr_tgt, tax, tape);
  Tensor<T> lc = ce_rows(cat_probs, cat_tgt, row_ones, tape);
  LossResult<T> out;
  out.total =
      weighted_sum_scalars<T>({{T(1), attr}, {static_cast<T>(w.lc2), lc}}, tape);
  out.terms["ii_attr"] = static_cast<double>(attr[0]);
  out.terms["ii_cat"] = static_cast<double>(lc[0]);
  out.terms["stage2_total"] = static_cast<double>(out.total[0]);
  return out;
}

}  // namespace glide
