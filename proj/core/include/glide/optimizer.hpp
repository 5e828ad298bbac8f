#pragma once

#include <cmath>

#include "glide/tensor.hpp"

namespace glide {

// Adam with bias correction. One state per parameter tensor; `step` counts
// updates applied to that parameter. The update allocates a fresh buffer for
// the parameter (tensors written by ops stay immutable) and runs in flat
// index order, so it is deterministic.
template <class T>
struct AdamState {
  std::vector<T> m, v;
  int64_t step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
void adam_step(Tensor<T>& param, const std::vector<T>& grad, AdamState<T>& st,
               const AdamConfig& cfg) {
  const size_t n = param.data->size();
  if (grad.size() != n) fail(ErrorCategory::shape, "adam_step: gradient size mismatch");
  if (st.m.empty()) {
    st.m.assign(n, T(0));
    st.v.assign(n, T(0));
  }
  st.step += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T corr1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(st.step)));
  const T corr2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(st.step)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);

  auto next = std::make_shared<std::vector<T>>(*param.data);
  T* p = next->data();
  for (size_t i = 0; i < n; ++i) {
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * grad[i] * grad[i];
    const T mhat = st.m[i] / corr1;
    const T vhat = st.v[i] / corr2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  param.data = std::move(next);
  param.node = -1;
}

}  // namespace glide
