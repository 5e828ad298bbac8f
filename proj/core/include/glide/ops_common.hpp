#pragma once

#include "glide/tape.hpp"
#include "glide/tensor.hpp"

namespace glide {

// Dot product with eight independent accumulator lanes. The lane layout (and
// therefore the summation order) is fixed by this code, not by the compiler
// or thread count, so results are bit-reproducible while the lane loop still
// vectorizes to FMA without any fast-math reassociation.
template <class T>
inline T dot_lanes8(const T* a, const T* b, int64_t n) {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0, acc4 = 0, acc5 = 0, acc6 = 0, acc7 = 0;
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 += a[i + 0] * b[i + 0];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
    acc4 += a[i + 4] * b[i + 4];
    acc5 += a[i + 5] * b[i + 5];
    acc6 += a[i + 6] * b[i + 6];
    acc7 += a[i + 7] * b[i + 7];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7))) + tail;
}

// y[0..n) += s * x[0..n). One FMA per element, no reduction, so the compiler
// vectorizes it under strict FP semantics.
template <class T>
inline void axpy(T* y, T s, const T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += s * x[i];
}

// Deterministic sum with the same fixed lane discipline as dot_lanes8.
template <class T>
inline T sum_lanes8(const T* a, int64_t n) {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0, acc4 = 0, acc5 = 0, acc6 = 0, acc7 = 0;
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 += a[i + 0];
    acc1 += a[i + 1];
    acc2 += a[i + 2];
    acc3 += a[i + 3];
    acc4 += a[i + 4];
    acc5 += a[i + 5];
    acc6 += a[i + 6];
    acc7 += a[i + 7];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i];
  return (((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7))) + tail;
}

template <class T, class FwdF, class BwdF>
Tensor<T> unary_op(const Tensor<T>& x, Tape<T>* tape, FwdF fwd, BwdF bwd) {
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yp[i] = fwd(xp[i]);
  if (tape && x.node >= 0) {
    const int xid = x.node;
    auto xd = x.data;
    auto yd = y.data;
    y.node = tape->emit([xid, xd, yd, bwd](Tape<T>& tp, const std::vector<T>& g) {
      auto& gx = tp.grad_accum(xid, xd->size());
      for (size_t i = 0; i < xd->size(); ++i) gx[i] += g[i] * bwd((*xd)[i], (*yd)[i]);
    });
  }
  return y;
}

}  // namespace glide
