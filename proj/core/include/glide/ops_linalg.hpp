#pragma once

#include "glide/ops_common.hpp"

namespace glide {

// Fully connected layer: y = x W^T + b with x [N, Din], W [Dout, Din],
// b [Dout] (pass an undefined tensor to skip the bias).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 2 && w.ndim() == 2 && x.dim(1) == w.dim(1),
              "linear: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(w.shape));
  const int N = x.dim(0), Din = x.dim(1), Dout = w.dim(0);
  if (b.defined()) check_shape(b.ndim() == 1 && b.dim(0) == Dout, "linear: bad bias " + shape_str(b.shape));

  Tensor<T> y = Tensor<T>::zeros({N, Dout});
  for (int n = 0; n < N; ++n) {
    const T* xr = x.ptr() + static_cast<int64_t>(n) * Din;
    T* yr = y.ptr() + static_cast<int64_t>(n) * Dout;
    for (int o = 0; o < Dout; ++o) {
      T v = dot_lanes8(xr, w.ptr() + static_cast<int64_t>(o) * Din, Din);
      yr[o] = b.defined() ? v + b[o] : v;
    }
  }

  const bool track = tape && (x.node >= 0 || w.node >= 0 || (b.defined() && b.node >= 0));
  if (track) {
    const int xid = x.node, wid = w.node, bid = b.defined() ? b.node : -1;
    auto xd = x.data;
    auto wd = w.data;
    y.node = tape->emit([xid, wid, bid, xd, wd, N, Din, Dout](Tape<T>& tp, const std::vector<T>& g) {
      if (xid >= 0) {
        auto& gx = tp.grad_accum(xid, xd->size());
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < Dout; ++o)
            axpy(gx.data() + static_cast<int64_t>(n) * Din, g[static_cast<int64_t>(n) * Dout + o],
                 wd->data() + static_cast<int64_t>(o) * Din, Din);
      }
      if (wid >= 0) {
        auto& gw = tp.grad_accum(wid, wd->size());
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < Dout; ++o)
            axpy(gw.data() + static_cast<int64_t>(o) * Din, g[static_cast<int64_t>(n) * Dout + o],
                 xd->data() + static_cast<int64_t>(n) * Din, Din);
      }
      if (bid >= 0) {
        auto& gb = tp.grad_accum(bid, Dout);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < Dout; ++o) gb[o] += g[static_cast<int64_t>(n) * Dout + o];
      }
    });
  }
  return y;
}

// Flatten NCHW to [N, C*H*W].
template <class T>
Tensor<T> flatten(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  check_shape(x.ndim() >= 2, "flatten: need at least 2-D");
  int64_t rest = 1;
  for (int i = 1; i < x.ndim(); ++i) rest *= x.shape[i];
  Tensor<T> y(x.shape, x.data);
  y.shape = {x.dim(0), static_cast<int>(rest)};
  y.node = -1;
  if (tape && x.node >= 0) {
    // Same buffer, new shape: identity backward.
    const int xid = x.node;
    const size_t sz = x.data->size();
    y.node = tape->emit([xid, sz](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, sz);
      for (size_t i = 0; i < sz; ++i) gx[i] += g[i];
    });
  }
  return y;
}

}  // namespace glide
