#pragma once

#include <memory>
#include <vector>

#include "glide/base.hpp"

namespace glide {

// Dense row-major tensor. Image data is NCHW. The payload lives behind a
// shared_ptr so autodiff closures can retain activations cheaply; once an
// operation has produced a tensor the buffer is treated as immutable
// (optimizers swap in a fresh buffer instead of writing through).
//
// `node` is the id of this tensor on the current Tape, or -1 when the tensor
// is not being tracked. Node ids are only meaningful for the tape that
// assigned them; anything kept across steps must be re-watched.
template <class T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::shared_ptr<std::vector<T>> d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(const Shape& s) {
    return Tensor(s, std::make_shared<std::vector<T>>(glide::numel(s), T(0)));
  }
  static Tensor full(const Shape& s, T v) {
    return Tensor(s, std::make_shared<std::vector<T>>(glide::numel(s), v));
  }
  static Tensor from(const Shape& s, std::vector<T> v) {
    if (static_cast<int64_t>(v.size()) != glide::numel(s))
      fail(ErrorCategory::shape, "Tensor::from: " + shape_str(s) + " needs " +
                                     std::to_string(glide::numel(s)) + " values, got " +
                                     std::to_string(v.size()));
    return Tensor(s, std::make_shared<std::vector<T>>(std::move(v)));
  }
  // Deep copy with a fresh buffer, not tracked on any tape.
  Tensor clone() const {
    return Tensor(shape, std::make_shared<std::vector<T>>(*data));
  }

  int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
  bool defined() const { return static_cast<bool>(data); }
  int dim(int i) const { return shape.at(i); }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T& operator[](int64_t i) { return (*data)[i]; }
  const T& operator[](int64_t i) const { return (*data)[i]; }

  template <class U>
  Tensor<U> cast() const {
    auto out = std::make_shared<std::vector<U>>(data->size());
    for (size_t i = 0; i < data->size(); ++i) (*out)[i] = static_cast<U>((*data)[i]);
    return Tensor<U>(shape, std::move(out));
  }
};

// Flat index into an NCHW tensor.
inline int64_t idx4(int C, int H, int W, int n, int c, int h, int w) {
  return ((static_cast<int64_t>(n) * C + c) * H + h) * W + w;
}

}  // namespace glide
