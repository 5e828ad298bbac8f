#pragma once

#include "glide/ops.hpp"

namespace glide {

// A feature tensor paired with its same-spatial-size soft mask in [0,1].
template <class T>
struct MaskedFeature {
  Tensor<T> features;  // [N,C,H,W]
  Tensor<T> mask;      // [N,1,H,W]
};

// Broadcast multiply by a one-channel map: y[n,c,h,w] = x[n,c,h,w] * map[n,0,h,w].
// The map is treated as a constant of the graph (no gradient into it); this
// is the building block for mask application and renormalization, where the
// mask path is frozen by design.
template <class T>
Tensor<T> mul_map(const Tensor<T>& x, const Tensor<T>& map, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4 && map.ndim() == 4 && map.dim(1) == 1 && map.dim(0) == x.dim(0) &&
                  map.dim(2) == x.dim(2) && map.dim(3) == x.dim(3),
              "mul_map: want NCHW and [N,1,H,W], got " + shape_str(x.shape) + " and " +
                  shape_str(map.shape));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  for (int n = 0; n < N; ++n) {
    const T* mp = map.ptr() + static_cast<int64_t>(n) * plane;
    for (int c = 0; c < C; ++c) {
      const T* xp = x.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T* yp = y.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) yp[i] = xp[i] * mp[i];
    }
  }
  if (tape && x.node >= 0) {
    const int xid = x.node;
    auto xd = x.data;
    auto md = map.data;
    y.node = tape->emit([xid, xd, md, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, xd->size());
      for (int n = 0; n < N; ++n) {
        const T* mp = md->data() + static_cast<int64_t>(n) * plane;
        for (int c = 0; c < C; ++c) {
          const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
          for (int64_t i = 0; i < plane; ++i) gx[off + i] += g[off + i] * mp[i];
        }
      }
    });
  }
  return y;
}

// y[n,c,h,w] = x + gate[n,0,h,w] * b[c], with the gate frozen. Applies the
// bias only on supported windows.
template <class T>
Tensor<T> add_gated_bias(const Tensor<T>& x, const Tensor<T>& b, const Tensor<T>& gate,
                         Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4 && b.ndim() == 1 && b.dim(0) == x.dim(1),
              "add_gated_bias: bias/channel mismatch");
  check_shape(gate.ndim() == 4 && gate.dim(1) == 1 && gate.dim(0) == x.dim(0) &&
                  gate.dim(2) == x.dim(2) && gate.dim(3) == x.dim(3),
              "add_gated_bias: gate shape mismatch");
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  for (int n = 0; n < N; ++n) {
    const T* gp = gate.ptr() + static_cast<int64_t>(n) * plane;
    for (int c = 0; c < C; ++c) {
      const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
      const T bv = b[c];
      for (int64_t i = 0; i < plane; ++i) y[off + i] = x[off + i] + gp[i] * bv;
    }
  }
  if (tape && (x.node >= 0 || b.node >= 0)) {
    const int xid = x.node, bid = b.node;
    auto gd = gate.data;
    const size_t xsz = x.data->size();
    y.node = tape->emit([xid, bid, gd, xsz, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      if (xid >= 0) {
        auto& gx = tp.grad_accum(xid, xsz);
        for (size_t i = 0; i < xsz; ++i) gx[i] += g[i];
      }
      if (bid >= 0) {
        auto& gb = tp.grad_accum(bid, C);
        for (int n = 0; n < N; ++n) {
          const T* gp = gd->data() + static_cast<int64_t>(n) * plane;
          for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
            T acc = 0;
            for (int64_t i = 0; i < plane; ++i) acc += g[off + i] * gp[i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return y;
}

namespace detail {

// Sliding k x k window sum over a one-channel map with same-padding and the
// given stride (zero fill outside the image).
template <class T>
Tensor<T> window_sum(const Tensor<T>& m, int k, int stride) {
  const int N = m.dim(0), H = m.dim(2), W = m.dim(3);
  const int pad = k / 2;
  const int Ho = conv_out_size(H, k, stride, pad), Wo = conv_out_size(W, k, stride, pad);
  Tensor<T> out = Tensor<T>::zeros({N, 1, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    const T* mp = m.ptr() + static_cast<int64_t>(n) * H * W;
    T* op = out.ptr() + static_cast<int64_t>(n) * Ho * Wo;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        T acc = 0;
        for (int kh = 0; kh < k; ++kh) {
          const int ih = oh * stride + kh - pad;
          if (ih < 0 || ih >= H) continue;
          for (int kw = 0; kw < k; ++kw) {
            const int iw = ow * stride + kw - pad;
            if (iw < 0 || iw >= W) continue;
            acc += mp[static_cast<int64_t>(ih) * W + iw];
          }
        }
        op[static_cast<int64_t>(oh) * Wo + ow] = acc;
      }
    }
  }
  return out;
}

template <class T>
void check_mask_range(const Tensor<T>& m, const char* who) {
  for (int64_t i = 0; i < m.numel(); ++i)
    if (!(m[i] >= T(0) && m[i] <= T(1)))
      fail(ErrorCategory::data, std::string(who) + ": mask value outside [0,1]");
}

}  // namespace detail

// Informed convolution (mask-aware convolution with renormalization):
// per output window, if max(M_win) > 0,
//   out = (k^2 / sum(M_win)) * W^T (X_win ⊙ M_win) + b,   M' = sum(M_win)/k^2,
// and exactly 0 (bias suppressed, mask 0) otherwise. Out-of-image padding
// contributes mask 0. The renormalization factor and the mask are constants
// of the forward pass: no gradient flows into the mask path.
//
// The renormalization uses the in-image window capacity (k^2 in the
// interior, the visible cell count at borders), which is what makes the
// all-ones mask reduce exactly to a standard same-padded convolution; the
// mask update keeps the literal 1/k^2 so border masks decay like the paper's
// soft update.
template <class T>
MaskedFeature<T> informed_conv2d(const MaskedFeature<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                                 int stride, Tape<T>* tape = nullptr) {
  const Tensor<T>& x = in.features;
  const Tensor<T>& m = in.mask;
  check_shape(x.ndim() == 4 && m.ndim() == 4 && m.dim(1) == 1 && m.dim(0) == x.dim(0) &&
                  m.dim(2) == x.dim(2) && m.dim(3) == x.dim(3),
              "informed_conv2d: feature/mask mismatch " + shape_str(x.shape) + " vs " +
                  shape_str(m.shape));
  detail::check_mask_range(m, "informed_conv2d");
  const int K = w.dim(2);
  const T k2 = static_cast<T>(K) * static_cast<T>(K);

  // Masked features through a bias-free standard convolution.
  Tensor<T> xm = mul_map(x, m, tape);
  Tensor<T> core = conv2d(xm, w, Tensor<T>(), stride, tape);

  // Window sums of the mask (same stride), the renormalization map, the
  // bias gate, and the in-image window capacity for border handling.
  Tensor<T> wsum = detail::window_sum(m, K, stride);
  Tensor<T> ones = Tensor<T>::full({m.dim(0), 1, m.dim(2), m.dim(3)}, T(1));
  Tensor<T> capacity = detail::window_sum(ones, K, stride);

  Tensor<T> scale = Tensor<T>::zeros(wsum.shape);
  Tensor<T> gate = Tensor<T>::zeros(wsum.shape);
  Tensor<T> next_mask = Tensor<T>::zeros(wsum.shape);
  for (int64_t i = 0; i < wsum.numel(); ++i) {
    if (wsum[i] > T(0)) {
      const T denom = std::max(wsum[i], T(1e-8));
      scale[i] = capacity[i] / denom;
      gate[i] = T(1);
    }
    next_mask[i] = wsum[i] / k2;
  }

  Tensor<T> scaled = mul_map(core, scale, tape);
  Tensor<T> out = b.defined() ? add_gated_bias(scaled, b, gate, tape) : scaled;
  return {out, next_mask};
}

// The hard mask update of partial convolution (the Fig. 4 comparator):
// mask' = 1 wherever any window entry is > 0, else 0.
template <class T>
Tensor<T> partial_conv_mask_update(const Tensor<T>& mask, int k, int stride) {
  Tensor<T> wsum = detail::window_sum(mask, k, stride);
  Tensor<T> out = Tensor<T>::zeros(wsum.shape);
  for (int64_t i = 0; i < wsum.numel(); ++i) out[i] = wsum[i] > T(0) ? T(1) : T(0);
  return out;
}

// Propagate a mask through `layers` stride-1 mask updates of kernel size k
// under both rules. Entry 0 of each sequence is the input mask; entry i is
// the mask after layer i.
template <class T>
struct MaskPropagation {
  std::vector<Tensor<T>> informed;
  std::vector<Tensor<T>> partial;
};

template <class T>
MaskPropagation<T> propagate_masks(const Tensor<T>& mask, int layers = 5, int k = 5) {
  detail::check_mask_range(mask, "propagate_masks");
  MaskPropagation<T> seq;
  seq.informed.push_back(mask);
  seq.partial.push_back(mask);
  const T k2 = static_cast<T>(k) * static_cast<T>(k);
  for (int i = 0; i < layers; ++i) {
    Tensor<T> wsum = detail::window_sum(seq.informed.back(), k, 1);
    Tensor<T> soft = Tensor<T>::zeros(wsum.shape);
    for (int64_t j = 0; j < wsum.numel(); ++j) soft[j] = wsum[j] / k2;
    seq.informed.push_back(std::move(soft));
    seq.partial.push_back(partial_conv_mask_update(seq.partial.back(), k, 1));
  }
  return seq;
}

}  // namespace glide
