#pragma once

#include <cmath>

#include "glide/ops_common.hpp"

namespace glide {

// Loss reductions. Every loss here takes probabilities (not logits) plus an
// explicit supervision mask, and normalizes by the number of supervised
// entries. Masked-out entries are multiplied by an exact zero in both the
// forward value and the gradient, so the labels stored there can never leak
// into training: flipping them changes nothing, bit for bit.

template <class T>
inline T clamp_prob(T p) {
  const T lo = T(1e-7);
  return p < lo ? lo : (p > T(1) - lo ? T(1) - lo : p);
}

// Mean binary cross-entropy over the masked entries of two same-shape
// tensors. Returns a scalar; zero (untracked) if the mask is empty.
template <class T>
Tensor<T> bce_masked(const Tensor<T>& p, const Tensor<T>& target, const Tensor<T>& mask,
                     Tape<T>* tape = nullptr) {
  check_shape(p.shape == target.shape && p.shape == mask.shape,
              "bce_masked: shape mismatch " + shape_str(p.shape));
  const int64_t n = p.numel();
  T msum = sum_lanes8(mask.ptr(), n);
  Tensor<T> out = Tensor<T>::zeros({1});
  if (msum <= T(0)) return out;
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask[i] == T(0)) continue;
    const T pc = clamp_prob(p[i]);
    acc += mask[i] * -(target[i] * std::log(pc) + (T(1) - target[i]) * std::log(T(1) - pc));
  }
  out[0] = acc / msum;
  if (tape && p.node >= 0) {
    const int pid = p.node;
    auto pd = p.data;
    auto td = target.data;
    auto md = mask.data;
    out.node = tape->emit([pid, pd, td, md, msum](Tape<T>& tp, const std::vector<T>& g) {
      auto& gp = tp.grad_accum(pid, pd->size());
      const T go = g[0] / msum;
      for (size_t i = 0; i < pd->size(); ++i) {
        if ((*md)[i] == T(0)) continue;
        const T pc = clamp_prob((*pd)[i]);
        gp[i] += go * (*md)[i] * (-(*td)[i] / pc + (T(1) - (*td)[i]) / (T(1) - pc));
      }
    });
  }
  return out;
}

// Mean squared error over masked entries.
template <class T>
Tensor<T> mse_masked(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask,
                     Tape<T>* tape = nullptr) {
  check_shape(pred.shape == target.shape && pred.shape == mask.shape,
              "mse_masked: shape mismatch " + shape_str(pred.shape));
  const int64_t n = pred.numel();
  T msum = sum_lanes8(mask.ptr(), n);
  Tensor<T> out = Tensor<T>::zeros({1});
  if (msum <= T(0)) return out;
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T d = pred[i] - target[i];
    acc += mask[i] * d * d;
  }
  out[0] = acc / msum;
  if (tape && pred.node >= 0) {
    const int pid = pred.node;
    auto pd = pred.data;
    auto td = target.data;
    auto md = mask.data;
    out.node = tape->emit([pid, pd, td, md, msum](Tape<T>& tp, const std::vector<T>& g) {
      auto& gp = tp.grad_accum(pid, pd->size());
      const T go = g[0] / msum;
      for (size_t i = 0; i < pd->size(); ++i)
        gp[i] += go * (*md)[i] * T(2) * ((*pd)[i] - (*td)[i]);
    });
  }
  return out;
}

// Cross-entropy -log p[target] over the channel axis of an NCHW probability
// map, averaged over cells where cell_mask > 0. Targets are channel indices.
template <class T>
Tensor<T> ce_cells(const Tensor<T>& probs, const std::vector<int>& target,
                   const Tensor<T>& cell_mask, Tape<T>* tape = nullptr) {
  check_shape(probs.ndim() == 4, "ce_cells: need NCHW probabilities");
  const int N = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
  const int64_t cells = static_cast<int64_t>(N) * H * W;
  check_shape(static_cast<int64_t>(target.size()) == cells, "ce_cells: target size mismatch");
  check_shape(cell_mask.numel() == cells, "ce_cells: mask size mismatch");
  const int64_t plane = static_cast<int64_t>(H) * W;

  Tensor<T> out = Tensor<T>::zeros({1});
  T msum = sum_lanes8(cell_mask.ptr(), cells);
  if (msum <= T(0)) return out;
  T acc = 0;
  for (int64_t cell = 0; cell < cells; ++cell) {
    const T m = cell_mask[cell];
    if (m == T(0)) continue;
    const int n = static_cast<int>(cell / plane);
    const int64_t hw = cell % plane;
    const int t = target[cell];
    check_shape(0 <= t && t < C, "ce_cells: target index out of range");
    acc += m * -std::log(clamp_prob(probs[(static_cast<int64_t>(n) * C + t) * plane + hw]));
  }
  out[0] = acc / msum;
  if (tape && probs.node >= 0) {
    const int pid = probs.node;
    auto pd = probs.data;
    auto md = cell_mask.data;
    auto tgt = std::make_shared<std::vector<int>>(target);
    out.node = tape->emit([pid, pd, md, tgt, msum, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      auto& gp = tp.grad_accum(pid, pd->size());
      const T go = g[0] / msum;
      const int64_t cells = static_cast<int64_t>(N) * plane;
      for (int64_t cell = 0; cell < cells; ++cell) {
        const T m = (*md)[cell];
        if (m == T(0)) continue;
        const int n = static_cast<int>(cell / plane);
        const int64_t hw = cell % plane;
        const int64_t k = (static_cast<int64_t>(n) * C + (*tgt)[cell]) * plane + hw;
        gp[k] += go * m * (-T(1) / clamp_prob((*pd)[k]));
      }
    });
  }
  return out;
}

// Cross-entropy over rows of an [N, C] probability matrix with integer
// targets, averaged over rows with row_mask > 0.
template <class T>
Tensor<T> ce_rows(const Tensor<T>& probs, const std::vector<int>& target,
                  const std::vector<T>& row_mask, Tape<T>* tape = nullptr) {
  check_shape(probs.ndim() == 2, "ce_rows: need [N,C] probabilities");
  const int N = probs.dim(0), C = probs.dim(1);
  check_shape(static_cast<int>(target.size()) == N && static_cast<int>(row_mask.size()) == N,
              "ce_rows: target/mask size mismatch");
  Tensor<T> out = Tensor<T>::zeros({1});
  T msum = 0;
  for (T m : row_mask) msum += m;
  if (msum <= T(0)) return out;
  T acc = 0;
  for (int n = 0; n < N; ++n) {
    if (row_mask[n] == T(0)) continue;
    const int t = target[n];
    check_shape(0 <= t && t < C, "ce_rows: target index out of range");
    acc += row_mask[n] * -std::log(clamp_prob(probs[static_cast<int64_t>(n) * C + t]));
  }
  out[0] = acc / msum;
  if (tape && probs.node >= 0) {
    const int pid = probs.node;
    auto pd = probs.data;
    auto tgt = std::make_shared<std::vector<int>>(target);
    auto msk = std::make_shared<std::vector<T>>(row_mask);
    out.node = tape->emit([pid, pd, tgt, msk, msum, N, C](Tape<T>& tp, const std::vector<T>& g) {
      auto& gp = tp.grad_accum(pid, pd->size());
      const T go = g[0] / msum;
      for (int n = 0; n < N; ++n) {
        if ((*msk)[n] == T(0)) continue;
        const int64_t k = static_cast<int64_t>(n) * C + (*tgt)[n];
        gp[k] += go * (*msk)[n] * (-T(1) / clamp_prob((*pd)[k]));
      }
    });
  }
  return out;
}

// Grouped cross-entropy over a flat [1, W] probability vector laid out as
// consecutive softmax groups. `target` holds the in-group index of the true
// value for each group; `supervised` selects the groups that count. The
// result is the mean over supervised groups.
template <class T>
Tensor<T> ce_grouped(const Tensor<T>& probs, const std::vector<std::pair<int, int>>& groups,
                     const std::vector<int>& target, const std::vector<char>& supervised,
                     Tape<T>* tape = nullptr) {
  check_shape(probs.ndim() == 2 && probs.dim(0) == 1, "ce_grouped: need a [1,W] row");
  check_shape(groups.size() == target.size() && groups.size() == supervised.size(),
              "ce_grouped: group/target/mask size mismatch");
  Tensor<T> out = Tensor<T>::zeros({1});
  int count = 0;
  T acc = 0;
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    if (!supervised[gi]) continue;
    const auto [off, len] = groups[gi];
    check_shape(0 <= target[gi] && target[gi] < len, "ce_grouped: target index out of range");
    check_shape(off >= 0 && off + len <= probs.dim(1), "ce_grouped: group out of range");
    acc += -std::log(clamp_prob(probs[off + target[gi]]));
    ++count;
  }
  if (count == 0) return out;
  out[0] = acc / static_cast<T>(count);
  if (tape && probs.node >= 0) {
    const int pid = probs.node;
    auto pd = probs.data;
    auto grp = std::make_shared<std::vector<std::pair<int, int>>>(groups);
    auto tgt = std::make_shared<std::vector<int>>(target);
    auto sup = std::make_shared<std::vector<char>>(supervised);
    out.node = tape->emit([pid, pd, grp, tgt, sup, count](Tape<T>& tp, const std::vector<T>& g) {
      auto& gp = tp.grad_accum(pid, pd->size());
      const T go = g[0] / static_cast<T>(count);
      for (size_t gi = 0; gi < grp->size(); ++gi) {
        if (!(*sup)[gi]) continue;
        const int64_t k = (*grp)[gi].first + (*tgt)[gi];
        gp[k] += go * (-T(1) / clamp_prob((*pd)[k]));
      }
    });
  }
  return out;
}

}  // namespace glide
