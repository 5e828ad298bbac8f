#pragma once

#include <cmath>

#include "glide/ops_common.hpp"

namespace glide {

// Batch normalization over NCHW, with an optional per-position weight map
// (shape [N,1,H,W], shared across channels). With weights the batch statistics
// become weighted moments,
//   mu_c  = sum_i w_i x_i / S,   var_c = sum_i w_i (x_i - mu_c)^2 / S,
// with S = sum_i w_i, and the output is additionally gated by the indicator
// [w_i > 0] so positions outside the support stay exactly zero. Plain batch
// norm is the w == 1 special case (without the gate). Variance is biased,
// both for normalization and for the running buffers, and the running update
// is r = (1 - momentum) * r + momentum * batch_stat.
//
// Weights are a frozen signal: no gradient flows into them.
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                      T momentum, T eps, const Tensor<T>* weights = nullptr,
                      Tape<T>* tape = nullptr) {
  check_shape(x.ndim() == 4, "batchnorm2d: need NCHW input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(gamma.numel() == C && beta.numel() == C && running_mean.numel() == C &&
                  running_var.numel() == C,
              "batchnorm2d: parameter size mismatch");
  if (weights)
    check_shape(weights->ndim() == 4 && weights->dim(0) == N && weights->dim(1) == 1 &&
                    weights->dim(2) == H && weights->dim(3) == W,
                "batchnorm2d: weight map must be [N,1,H,W]");
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t count = static_cast<int64_t>(N) * plane;
  if (training && !weights && count == 1)
    fail(ErrorCategory::numeric, "batchnorm2d: cannot normalize a single element in training mode");

  // Per-channel statistics actually used for normalization.
  std::vector<T> mean(C), inv(C);
  T weight_sum = 0;
  if (training) {
    if (weights) {
      weight_sum = sum_lanes8(weights->ptr(), weights->numel());
    } else {
      weight_sum = static_cast<T>(count);
    }
    for (int c = 0; c < C; ++c) {
      T m = 0, v = 0;
      if (weight_sum > T(0)) {
        for (int n = 0; n < N; ++n) {
          const T* xp = x.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
          if (weights) {
            const T* wp = weights->ptr() + static_cast<int64_t>(n) * plane;
            m += dot_lanes8(xp, wp, plane);
          } else {
            m += sum_lanes8(xp, plane);
          }
        }
        m /= weight_sum;
        for (int n = 0; n < N; ++n) {
          const T* xp = x.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
          const T* wp = weights ? weights->ptr() + static_cast<int64_t>(n) * plane : nullptr;
          T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
          int64_t i = 0;
          for (; i + 4 <= plane; i += 4) {
            const T d0 = xp[i] - m, d1 = xp[i + 1] - m, d2 = xp[i + 2] - m, d3 = xp[i + 3] - m;
            acc0 += (wp ? wp[i] : T(1)) * d0 * d0;
            acc1 += (wp ? wp[i + 1] : T(1)) * d1 * d1;
            acc2 += (wp ? wp[i + 2] : T(1)) * d2 * d2;
            acc3 += (wp ? wp[i + 3] : T(1)) * d3 * d3;
          }
          for (; i < plane; ++i) {
            const T d = xp[i] - m;
            v += (wp ? wp[i] : T(1)) * d * d;
          }
          v += (acc0 + acc1) + (acc2 + acc3);
        }
        v /= weight_sum;
      } else {
        m = T(0);
        v = T(1) - eps;  // fully masked batch: normalization is a no-op anyway
      }
      mean[c] = m;
      inv[c] = T(1) / std::sqrt(v + eps);
      if (weight_sum > T(0)) {
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * v;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      inv[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor<T> y = Tensor<T>::zeros(x.shape);
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const int n = nc / C, c = nc % C;
    const T m = mean[c], iv = inv[c], gm = gamma[c], bt = beta[c];
    const T* xp = x.ptr() + static_cast<int64_t>(nc) * plane;
    const T* wp = weights ? weights->ptr() + static_cast<int64_t>(n) * plane : nullptr;
    T* yp = y.ptr() + static_cast<int64_t>(nc) * plane;
    for (int64_t i = 0; i < plane; ++i) {
      const T v = gm * ((xp[i] - m) * iv) + bt;
      yp[i] = wp ? (wp[i] > T(0) ? v : T(0)) : v;
    }
  }

  const bool track = tape && (x.node >= 0 || gamma.node >= 0 || beta.node >= 0);
  if (track) {
    const int xid = x.node, gid = gamma.node, bid = beta.node;
    auto xd = x.data;
    auto gd = gamma.data;
    std::shared_ptr<std::vector<T>> wdata = weights ? weights->data : nullptr;
    auto mean_s = std::make_shared<std::vector<T>>(mean);
    auto inv_s = std::make_shared<std::vector<T>>(inv);
    const T S = weights ? weight_sum : static_cast<T>(count);
    y.node = tape->emit([xid, gid, bid, xd, gd, wdata, mean_s, inv_s, S, N, C, plane, training](
                            Tape<T>& tp, const std::vector<T>& g) {
      std::vector<T>* gx = xid >= 0 ? &tp.grad_accum(xid, xd->size()) : nullptr;
      std::vector<T>* gg = gid >= 0 ? &tp.grad_accum(gid, C) : nullptr;
      std::vector<T>* gb = bid >= 0 ? &tp.grad_accum(bid, C) : nullptr;
#pragma omp parallel for schedule(static)
      for (int c = 0; c < C; ++c) {
        const T m = (*mean_s)[c], iv = (*inv_s)[c], gm = (*gd)[c];
        // First pass: the reduced quantities sum(ghat) and sum(ghat * xhat),
        // plus gamma/beta gradients.
        T sum_g = 0, sum_gx = 0;
        for (int n = 0; n < N; ++n) {
          const T* xp = xd->data() + (static_cast<int64_t>(n) * C + c) * plane;
          const T* wp = wdata ? wdata->data() + static_cast<int64_t>(n) * plane : nullptr;
          const T* gp = g.data() + (static_cast<int64_t>(n) * C + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            const T ind = wp ? (wp[i] > T(0) ? T(1) : T(0)) : T(1);
            const T gi = gp[i] * ind;
            sum_g += gi;
            sum_gx += gi * ((xp[i] - m) * iv);
          }
        }
        if (gg) (*gg)[c] += sum_gx;
        if (gb) (*gb)[c] += sum_g;
        if (!gx) continue;
        if (training && S > T(0)) {
          for (int n = 0; n < N; ++n) {
            const T* xp = xd->data() + (static_cast<int64_t>(n) * C + c) * plane;
            const T* wp = wdata ? wdata->data() + static_cast<int64_t>(n) * plane : nullptr;
            T* dxp = gx->data() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              const T w = wp ? wp[i] : T(1);
              const T ind = wp ? (w > T(0) ? T(1) : T(0)) : T(1);
              const T ghat = g.data()[(static_cast<int64_t>(n) * C + c) * plane + i] * ind * gm;
              const T xhat = (xp[i] - m) * iv;
              dxp[i] += iv * (ghat - (w / S) * gm * sum_g - (w / S) * xhat * gm * sum_gx);
            }
          }
        } else {
          // Eval mode (or fully masked batch): statistics are constants.
          for (int n = 0; n < N; ++n) {
            const T* wp = wdata ? wdata->data() + static_cast<int64_t>(n) * plane : nullptr;
            const T* gp = g.data() + (static_cast<int64_t>(n) * C + c) * plane;
            T* dxp = gx->data() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              const T ind = wp ? (wp[i] > T(0) ? T(1) : T(0)) : T(1);
              dxp[i] += gp[i] * ind * gm * iv;
            }
          }
        }
      }
    });
  }
  return y;
}

}  // namespace glide
