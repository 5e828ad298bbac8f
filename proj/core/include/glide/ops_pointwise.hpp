#pragma once

#include <cmath>

#include "glide/ops_common.hpp"

namespace glide {

template <class T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  return unary_op(
      x, tape, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  return unary_op(
      x, tape, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

// Exponential activation (used on predicted box sizes so they stay
// positive). Input is clamped to ±50 to keep the output finite; the clamp is
// reflected in the derivative.
template <class T>
Tensor<T> exp_act(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  return unary_op(
      x, tape,
      [](T v) { return std::exp(v < T(-50) ? T(-50) : (v > T(50) ? T(50) : v)); },
      [](T v, T y) { return (v > T(-50) && v < T(50)) ? y : T(0); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s, Tape<T>* tape = nullptr) {
  return unary_op(
      x, tape, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  check_shape(a.shape == b.shape, "add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> y = Tensor<T>::zeros(a.shape);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
  if (tape && (a.node >= 0 || b.node >= 0)) {
    const int aid = a.node, bid = b.node;
    const size_t sz = a.data->size();
    y.node = tape->emit([aid, bid, sz](Tape<T>& tp, const std::vector<T>& g) {
      if (aid >= 0) {
        auto& ga = tp.grad_accum(aid, sz);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i];
      }
      if (bid >= 0) {
        auto& gb = tp.grad_accum(bid, sz);
        for (size_t i = 0; i < sz; ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  check_shape(a.shape == b.shape, "mul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> y = Tensor<T>::zeros(a.shape);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
  if (tape && (a.node >= 0 || b.node >= 0)) {
    const int aid = a.node, bid = b.node;
    auto ad = a.data;
    auto bd = b.data;
    y.node = tape->emit([aid, bid, ad, bd](Tape<T>& tp, const std::vector<T>& g) {
      if (aid >= 0) {
        auto& ga = tp.grad_accum(aid, ad->size());
        for (size_t i = 0; i < ad->size(); ++i) ga[i] += g[i] * (*bd)[i];
      }
      if (bid >= 0) {
        auto& gb = tp.grad_accum(bid, bd->size());
        for (size_t i = 0; i < bd->size(); ++i) gb[i] += g[i] * (*ad)[i];
      }
    });
  }
  return y;
}

// Softmax along one axis of an arbitrary-rank tensor.
template <class T>
Tensor<T> softmax_axis(const Tensor<T>& x, int axis, Tape<T>* tape = nullptr) {
  check_shape(axis >= 0 && axis < x.ndim(), "softmax_axis: axis out of range");
  const int L = x.shape[axis];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape[i];
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.shape[i];

  Tensor<T> y = Tensor<T>::zeros(x.shape);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * L * inner + in;
      T mx = xp[base];
      for (int l = 1; l < L; ++l) mx = std::max(mx, xp[base + l * inner]);
      T denom = 0;
      for (int l = 0; l < L; ++l) {
        T e = std::exp(xp[base + l * inner] - mx);
        yp[base + l * inner] = e;
        denom += e;
      }
      for (int l = 0; l < L; ++l) yp[base + l * inner] /= denom;
    }
  }
  if (tape && x.node >= 0) {
    const int xid = x.node;
    auto yd = y.data;
    y.node = tape->emit([xid, yd, L, outer, inner](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, yd->size());
      const T* p = yd->data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * L * inner + in;
          T dot = 0;
          for (int l = 0; l < L; ++l) dot += g[base + l * inner] * p[base + l * inner];
          for (int l = 0; l < L; ++l) {
            const int64_t k = base + l * inner;
            gx[k] += p[k] * (g[k] - dot);
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs, Tape<T>* tape = nullptr) {
  check_shape(!xs.empty(), "concat_channels: no inputs");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int C = 0;
  for (const auto& x : xs) {
    check_shape(x.ndim() == 4 && x.dim(0) == N && x.dim(2) == H && x.dim(3) == W,
                "concat_channels: incompatible input " + shape_str(x.shape));
    C += x.dim(1);
  }
  Tensor<T> y = Tensor<T>::zeros({N, C, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  int c0 = 0;
  for (const auto& x : xs) {
    const int Ci = x.dim(1);
    for (int n = 0; n < N; ++n) {
      std::copy_n(x.ptr() + n * Ci * plane, Ci * plane, y.ptr() + (static_cast<int64_t>(n) * C + c0) * plane);
    }
    c0 += Ci;
  }
  bool tracked = false;
  for (const auto& x : xs) tracked |= (x.node >= 0);
  if (tape && tracked) {
    struct Piece {
      int node;
      int channels;
      size_t size;
    };
    std::vector<Piece> pieces;
    for (const auto& x : xs) pieces.push_back({x.node, x.dim(1), x.data->size()});
    y.node = tape->emit([pieces, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      int off = 0;
      for (const auto& p : pieces) {
        if (p.node >= 0) {
          auto& gx = tp.grad_accum(p.node, p.size);
          for (int n = 0; n < N; ++n) {
            const T* src = g.data() + (static_cast<int64_t>(n) * C + off) * plane;
            T* dst = gx.data() + static_cast<int64_t>(n) * p.channels * plane;
            for (int64_t i = 0; i < p.channels * plane; ++i) dst[i] += src[i];
          }
        }
        off += p.channels;
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4, "slice_channels: need NCHW input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels: bad range");
  const int Cs = c1 - c0;
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> y = Tensor<T>::zeros({N, Cs, H, W});
  for (int n = 0; n < N; ++n)
    std::copy_n(x.ptr() + (static_cast<int64_t>(n) * C + c0) * plane, Cs * plane,
                y.ptr() + static_cast<int64_t>(n) * Cs * plane);
  if (tape && x.node >= 0) {
    const int xid = x.node;
    const size_t sz = x.data->size();
    y.node = tape->emit([xid, sz, N, C, c0, Cs, plane](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, sz);
      for (int n = 0; n < N; ++n) {
        const T* src = g.data() + static_cast<int64_t>(n) * Cs * plane;
        T* dst = gx.data() + (static_cast<int64_t>(n) * C + c0) * plane;
        for (int64_t i = 0; i < Cs * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// One row of a [N, D] matrix as a [1, D] tensor.
template <class T>
Tensor<T> slice_row(const Tensor<T>& x, int row, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 2, "slice_row: need 2-D input");
  const int N = x.dim(0), D = x.dim(1);
  check_shape(0 <= row && row < N, "slice_row: row out of range");
  Tensor<T> y = Tensor<T>::zeros({1, D});
  std::copy_n(x.ptr() + static_cast<int64_t>(row) * D, D, y.ptr());
  if (tape && x.node >= 0) {
    const int xid = x.node;
    const size_t sz = x.data->size();
    y.node = tape->emit([xid, sz, row, D](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, sz);
      for (int i = 0; i < D; ++i) gx[static_cast<int64_t>(row) * D + i] += g[i];
    });
  }
  return y;
}

// Nearest-neighbor upsampling to an explicit target size; output pixel i
// copies source pixel floor(i * src / dst). Integer ratios are not required.
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int target_h, int target_w, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4, "upsample_nearest: need NCHW input");
  check_shape(target_h > 0 && target_w > 0, "upsample_nearest: zero target size");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(target_h >= H && target_w >= W, "upsample_nearest: target smaller than source");
  const int Ho = target_h, Wo = target_w;
  std::vector<int> hmap(Ho), wmap(Wo);
  for (int h = 0; h < Ho; ++h) hmap[h] = static_cast<int>(static_cast<int64_t>(h) * H / Ho);
  for (int w = 0; w < Wo; ++w) wmap[w] = static_cast<int>(static_cast<int64_t>(w) * W / Wo);

  Tensor<T> y = Tensor<T>::zeros({N, C, Ho, Wo});
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = xp + static_cast<int64_t>(nc) * H * W;
    T* dst = yp + static_cast<int64_t>(nc) * Ho * Wo;
    for (int h = 0; h < Ho; ++h)
      for (int w = 0; w < Wo; ++w)
        dst[static_cast<int64_t>(h) * Wo + w] = src[static_cast<int64_t>(hmap[h]) * W + wmap[w]];
  }
  if (tape && x.node >= 0) {
    const int xid = x.node;
    const size_t sz = x.data->size();
    auto hm = std::make_shared<std::vector<int>>(hmap);
    auto wm = std::make_shared<std::vector<int>>(wmap);
    y.node = tape->emit([xid, sz, N, C, H, W, Ho, Wo, hm, wm](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, sz);
      for (int nc = 0; nc < N * C; ++nc) {
        const T* src = g.data() + static_cast<int64_t>(nc) * Ho * Wo;
        T* dst = gx.data() + static_cast<int64_t>(nc) * H * W;
        for (int h = 0; h < Ho; ++h)
          for (int w = 0; w < Wo; ++w)
            dst[static_cast<int64_t>((*hm)[h]) * W + (*wm)[w]] += src[static_cast<int64_t>(h) * Wo + w];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4, "global_avg_pool: need NCHW input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> y = Tensor<T>::zeros({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      y[static_cast<int64_t>(n) * C + c] = sum_lanes8(x.ptr() + (static_cast<int64_t>(n) * C + c) * plane, plane) / static_cast<T>(plane);
  if (tape && x.node >= 0) {
    const int xid = x.node;
    const size_t sz = x.data->size();
    y.node = tape->emit([xid, sz, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, sz);
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const T gv = g[nc] / static_cast<T>(plane);
        T* dst = gx.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += gv;
      }
    });
  }
  return y;
}

// Per-channel broadcast multiply: y[n,c,h,w] = x[n,c,h,w] * v[n,c].
template <class T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& v, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4 && v.ndim() == 2 && v.dim(0) == x.dim(0) && v.dim(1) == x.dim(1),
              "mul_channel: want NCHW and [N,C], got " + shape_str(x.shape) + " and " + shape_str(v.shape));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T s = v[nc];
    const T* src = x.ptr() + nc * plane;
    T* dst = y.ptr() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = s * src[i];
  }
  if (tape && (x.node >= 0 || v.node >= 0)) {
    const int xid = x.node, vid = v.node;
    auto xd = x.data;
    auto vd = v.data;
    y.node = tape->emit([xid, vid, xd, vd, N, C, plane](Tape<T>& tp, const std::vector<T>& g) {
      if (xid >= 0) {
        auto& gx = tp.grad_accum(xid, xd->size());
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
          axpy(gx.data() + nc * plane, (*vd)[nc], g.data() + nc * plane, plane);
      }
      if (vid >= 0) {
        auto& gv = tp.grad_accum(vid, vd->size());
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
          gv[nc] += dot_lanes8(g.data() + nc * plane, xd->data() + nc * plane, plane);
      }
    });
  }
  return y;
}

// total = sum_i w_i * s_i over scalar tensors; the glue for composite losses.
template <class T>
Tensor<T> weighted_sum_scalars(const std::vector<std::pair<T, Tensor<T>>>& terms, Tape<T>* tape = nullptr) {
  check_shape(!terms.empty(), "weighted_sum_scalars: no terms");
  Tensor<T> y = Tensor<T>::zeros({1});
  bool tracked = false;
  for (const auto& [w, s] : terms) {
    check_shape(s.numel() == 1, "weighted_sum_scalars: non-scalar term");
    y[0] += w * s[0];
    tracked |= (s.node >= 0);
  }
  if (tape && tracked) {
    std::vector<std::pair<T, int>> links;
    for (const auto& [w, s] : terms) links.emplace_back(w, s.node);
    y.node = tape->emit([links](Tape<T>& tp, const std::vector<T>& g) {
      for (const auto& [w, node] : links)
        if (node >= 0) tp.grad_accum(node, 1)[0] += w * g[0];
    });
  }
  return y;
}

template <class T>
Tensor<T> mean_scalars(const std::vector<Tensor<T>>& terms, Tape<T>* tape = nullptr) {
  check_shape(!terms.empty(), "mean_scalars: no terms");
  std::vector<std::pair<T, Tensor<T>>> weighted;
  const T w = T(1) / static_cast<T>(terms.size());
  for (const auto& s : terms) weighted.emplace_back(w, s);
  return weighted_sum_scalars(weighted, tape);
}

// Row-wise concatenation of [N, C_i] feature matrices into [N, sum C_i].
template <class T>
Tensor<T> concat_vectors(const std::vector<Tensor<T>>& xs, Tape<T>* tape = nullptr) {
  check_shape(!xs.empty(), "concat_vectors: no inputs");
  const int N = xs[0].dim(0);
  int C = 0;
  for (const auto& x : xs) {
    check_shape(x.ndim() == 2 && x.dim(0) == N, "concat_vectors: want [N,C] rows, got " + shape_str(x.shape));
    C += x.dim(1);
  }
  Tensor<T> y = Tensor<T>::zeros({N, C});
  bool tracked = false;
  {
    int off = 0;
    for (const auto& x : xs) {
      const int ci = x.dim(1);
      for (int n = 0; n < N; ++n)
        std::copy_n(x.ptr() + static_cast<int64_t>(n) * ci, ci,
                    y.ptr() + static_cast<int64_t>(n) * C + off);
      off += ci;
      tracked |= (x.node >= 0);
    }
  }
  if (tape && tracked) {
    struct Piece {
      int node;
      int off;
      int ci;
    };
    std::vector<Piece> pieces;
    int off = 0;
    for (const auto& x : xs) {
      pieces.push_back({x.node, off, x.dim(1)});
      off += x.dim(1);
    }
    y.node = tape->emit([pieces, N, C](Tape<T>& tp, const std::vector<T>& g) {
      for (const auto& p : pieces) {
        if (p.node < 0) continue;
        auto& gx = tp.grad_accum(p.node, static_cast<int64_t>(N) * p.ci);
        for (int n = 0; n < N; ++n)
          for (int i = 0; i < p.ci; ++i)
            gx[static_cast<int64_t>(n) * p.ci + i] += g[static_cast<int64_t>(n) * C + p.off + i];
      }
    });
  }
  return y;
}

// Softmax applied independently to consecutive (offset, length) segments of
// each row of an [N, W] matrix. Entries outside every group pass through
// unchanged. Used for grouped one-hot attribute encodings.
template <class T>
Tensor<T> softmax_groups(const Tensor<T>& x, const std::vector<std::pair<int, int>>& groups,
                         Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 2, "softmax_groups: need an [N,W] matrix");
  const int N = x.dim(0), W = x.dim(1);
  for (const auto& [off, len] : groups)
    check_shape(off >= 0 && len >= 1 && off + len <= W, "softmax_groups: group out of range");

  Tensor<T> y = Tensor<T>::zeros(x.shape);
  std::copy_n(x.ptr(), x.numel(), y.ptr());
  T* yp = y.ptr();
  for (int n = 0; n < N; ++n) {
    const int64_t row = static_cast<int64_t>(n) * W;
    for (const auto& [off, len] : groups) {
      T mx = yp[row + off];
      for (int i = 1; i < len; ++i) mx = std::max(mx, yp[row + off + i]);
      T denom = 0;
      for (int i = 0; i < len; ++i) {
        const T e = std::exp(yp[row + off + i] - mx);
        yp[row + off + i] = e;
        denom += e;
      }
      for (int i = 0; i < len; ++i) yp[row + off + i] /= denom;
    }
  }
  if (tape && x.node >= 0) {
    const int xid = x.node;
    auto yd = y.data;
    auto grp = std::make_shared<std::vector<std::pair<int, int>>>(groups);
    y.node = tape->emit([xid, yd, grp, N, W](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, yd->size());
      const T* p = yd->data();
      // Track group membership so pass-through coordinates get identity grads.
      std::vector<char> covered(W, 0);
      for (const auto& [off, len] : *grp)
        for (int i = 0; i < len; ++i) covered[off + i] = 1;
      for (int n = 0; n < N; ++n) {
        const int64_t row = static_cast<int64_t>(n) * W;
        for (const auto& [off, len] : *grp) {
          T dot = 0;
          for (int i = 0; i < len; ++i) dot += g[row + off + i] * p[row + off + i];
          for (int i = 0; i < len; ++i) {
            const int64_t k = row + off + i;
            gx[k] += p[k] * (g[k] - dot);
          }
        }
        for (int i = 0; i < W; ++i)
          if (!covered[i]) gx[row + i] += g[row + i];
      }
    });
  }
  return y;
}

}  // namespace glide
