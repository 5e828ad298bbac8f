#pragma once

#include "glide/ops_common.hpp"

namespace glide {

// Attention-weighted spatial reduction. `x` is a channel concatenation of
// per-level feature blocks (level_sizes[i] channels each) and `attn` holds
// one spatial attention map per level; each output feature is the attention-
// weighted sum of its plane:
//   out[n, c] = sum_hw attn[n, level(c), h, w] * x[n, c, h, w].
template <class T>
Tensor<T> attention_reduce(const Tensor<T>& x, const Tensor<T>& attn,
                           const std::vector<int>& level_sizes, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4 && attn.ndim() == 4, "attention_reduce: need NCHW inputs");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int L = static_cast<int>(level_sizes.size());
  check_shape(attn.dim(0) == N && attn.dim(1) == L && attn.dim(2) == H && attn.dim(3) == W,
              "attention_reduce: attention shape mismatch " + shape_str(attn.shape));
  int csum = 0;
  for (int s : level_sizes) csum += s;
  check_shape(csum == C, "attention_reduce: level sizes do not cover channels");

  // Channel -> level lookup.
  std::vector<int> level_of(C);
  {
    int c = 0;
    for (int l = 0; l < L; ++l)
      for (int i = 0; i < level_sizes[l]; ++i) level_of[c++] = l;
  }

  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> y = Tensor<T>::zeros({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      y[static_cast<int64_t>(n) * C + c] =
          dot_lanes8(x.ptr() + (static_cast<int64_t>(n) * C + c) * plane,
                     attn.ptr() + (static_cast<int64_t>(n) * L + level_of[c]) * plane, plane);

  if (tape && (x.node >= 0 || attn.node >= 0)) {
    const int xid = x.node, aid = attn.node;
    auto xd = x.data;
    auto ad = attn.data;
    auto lof = std::make_shared<std::vector<int>>(level_of);
    y.node = tape->emit([xid, aid, xd, ad, lof, N, C, L, plane](Tape<T>& tp, const std::vector<T>& g) {
      if (xid >= 0) {
        auto& gx = tp.grad_accum(xid, xd->size());
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            axpy(gx.data() + (static_cast<int64_t>(n) * C + c) * plane,
                 g[static_cast<int64_t>(n) * C + c],
                 ad->data() + (static_cast<int64_t>(n) * L + (*lof)[c]) * plane, plane);
      }
      if (aid >= 0) {
        auto& ga = tp.grad_accum(aid, ad->size());
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            axpy(ga.data() + (static_cast<int64_t>(n) * L + (*lof)[c]) * plane,
                 g[static_cast<int64_t>(n) * C + c],
                 xd->data() + (static_cast<int64_t>(n) * C + c) * plane, plane);
      }
    });
  }
  return y;
}

}  // namespace glide
