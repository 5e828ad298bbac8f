#pragma once

#include <string>
#include <vector>

#include "glide/optimizer.hpp"
#include "glide/tape.hpp"
#include "glide/tensor.hpp"

namespace glide {

// Registry of named parameters and buffers. Modules register themselves in a
// fixed construction order, which gives checkpoints and optimizer sweeps a
// stable, deterministic ordering.
template <class T>
struct ParamSet {
  struct Param {
    std::string name;
    Tensor<T>* tensor;
    AdamState<T>* state;
  };
  struct Buffer {
    std::string name;
    Tensor<T>* tensor;
  };
  std::vector<Param> params;
  std::vector<Buffer> buffers;

  void add(const std::string& name, Tensor<T>& t, AdamState<T>& st) {
    params.push_back({name, &t, &st});
  }
  void add_buffer(const std::string& name, Tensor<T>& t) { buffers.push_back({name, &t}); }

  void watch_all(Tape<T>& tape) {
    for (auto& p : params) tape.watch(*p.tensor);
  }
  void unwatch_all() {
    for (auto& p : params) p.tensor->node = -1;
  }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor->numel();
    return n;
  }
};

}  // namespace glide
