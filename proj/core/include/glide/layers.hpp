#pragma once

#include <cmath>
#include <string>

#include "glide/informed.hpp"
#include "glide/ops.hpp"
#include "glide/params.hpp"
#include "glide/rng.hpp"
#include "glide/tensor.hpp"

namespace glide {

// Fan-in scaled uniform init: U(-b, b) with b = 1/sqrt(fan_in).
template <class T>
inline void fill_fan_in_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  T* p = t.ptr();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
struct Conv2d {
  Tensor<T> w;  // [Co, Ci, K, K]
  Tensor<T> b;  // [Co]
  int stride = 1;
  AdamState<T> w_state, b_state;

  Conv2d() = default;
  Conv2d(int ci, int co, int k, int stride_, Rng& rng, ParamSet<T>& ps, const std::string& name)
      : stride(stride_) {
    w = Tensor<T>::zeros({co, ci, k, k});
    b = Tensor<T>::zeros({co});
    fill_fan_in_uniform(w, ci * k * k, rng);
    ps.add(name + ".w", w, w_state);
    ps.add(name + ".b", b, b_state);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    return conv2d(x, w, b, stride, tape);
  }
  MaskedFeature<T> forward_informed(const MaskedFeature<T>& in, Tape<T>* tape) const {
    return informed_conv2d(in, w, b, stride, tape);
  }
};

template <class T>
struct Linear {
  Tensor<T> w;  // [Out, In]
  Tensor<T> b;  // [Out]
  AdamState<T> w_state, b_state;

  Linear() = default;
  Linear(int in, int out, Rng& rng, ParamSet<T>& ps, const std::string& name) {
    w = Tensor<T>::zeros({out, in});
    b = Tensor<T>::zeros({out});
    fill_fan_in_uniform(w, in, rng);
    ps.add(name + ".w", w, w_state);
    ps.add(name + ".b", b, b_state);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const { return linear(x, w, b, tape); }
};

template <class T>
struct BatchNorm2d {
  Tensor<T> gamma, beta;           // [C]
  Tensor<T> running_mean, running_var;  // [C] buffers
  AdamState<T> gamma_state, beta_state;
  T momentum = static_cast<T>(0.1);
  T eps = static_cast<T>(1e-5);

  BatchNorm2d() = default;
  BatchNorm2d(int c, ParamSet<T>& ps, const std::string& name) {
    gamma = Tensor<T>::full({c}, static_cast<T>(1));
    beta = Tensor<T>::zeros({c});
    running_mean = Tensor<T>::zeros({c});
    running_var = Tensor<T>::full({c}, static_cast<T>(1));
    ps.add(name + ".gamma", gamma, gamma_state);
    ps.add(name + ".beta", beta, beta_state);
    ps.add_buffer(name + ".running_mean", running_mean);
    ps.add_buffer(name + ".running_var", running_var);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training, Tape<T>* tape,
                    const Tensor<T>* weights = nullptr) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, training, momentum, eps, weights,
                       tape);
  }
};

// Conv -> BN -> ReLU block, the workhorse of every convolutional trunk here.
template <class T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(int ci, int co, int k, int stride, Rng& rng, ParamSet<T>& ps, const std::string& name)
      : conv(ci, co, k, stride, rng, ps, name + ".conv"), bn(co, ps, name + ".bn") {}

  Tensor<T> forward(const Tensor<T>& x, bool training, Tape<T>* tape) {
    return relu(bn.forward(conv.forward(x, tape), training, tape), tape);
  }
  // Informed variant: convolution respects the mask, BN weights each spatial
  // cell by the propagated mask so unsupported cells do not pollute the stats.
  MaskedFeature<T> forward_informed(const MaskedFeature<T>& in, bool training, Tape<T>* tape) {
    MaskedFeature<T> c = conv.forward_informed(in, tape);
    Tensor<T> y = bn.forward(c.features, training, tape, &c.mask);
    return {relu(y, tape), c.mask};
  }
};

}  // namespace glide
