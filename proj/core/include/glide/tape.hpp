#pragma once

#include <functional>
#include <vector>

#include "glide/tensor.hpp"

namespace glide {

// Reverse-mode tape. Operations append one node per produced tensor, in
// execution order, which is already a topological order of the graph; the
// backward sweep walks the node list once, in reverse. Gradient buffers are
// allocated lazily the first time something accumulates into them, and all
// accumulation is additive, so fan-out falls out for free.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape<T>&, const std::vector<T>&)>;

  // Register a leaf (parameter or input we want gradients for).
  void watch(Tensor<T>& t) { t.node = emit(nullptr); }

  // Append a node. `fn` receives the node's accumulated output gradient and
  // is responsible for pushing gradient into the node's inputs. Leaves pass
  // nullptr.
  int emit(BackwardFn fn) {
    nodes_.push_back(std::move(fn));
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Gradient buffer for a node, created zero-filled on first touch.
  std::vector<T>& grad_accum(int node, size_t n) {
    auto& g = grads_.at(node);
    if (g.empty()) g.assign(n, T(0));
    return g;
  }

  // Run the backward sweep from a scalar loss.
  void backward(const Tensor<T>& loss) {
    if (loss.node < 0) fail(ErrorCategory::internal, "backward: loss is not on this tape");
    if (loss.numel() != 1) fail(ErrorCategory::shape, "backward: loss must be scalar");
    if (ran_) fail(ErrorCategory::internal, "backward: tape already consumed");
    ran_ = true;
    grad_accum(loss.node, 1)[0] = T(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      if (!grads_[id].empty() && nodes_[id]) nodes_[id](*this, grads_[id]);
    }
  }

  // Gradient of a watched tensor after backward(). Empty means no gradient
  // reached it (treat as zeros).
  const std::vector<T>& grad(const Tensor<T>& t) const {
    static const std::vector<T> kEmpty;
    if (t.node < 0) return kEmpty;
    return grads_.at(t.node);
  }

  std::vector<T> grad_or_zeros(const Tensor<T>& t) const {
    const auto& g = grad(t);
    if (!g.empty()) return g;
    return std::vector<T>(t.numel(), T(0));
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<BackwardFn> nodes_;
  std::vector<std::vector<T>> grads_;
  bool ran_ = false;
};

// Maximum relative gradient error between reverse-mode and central
// differences, over every coordinate of every listed input.
//
// `fn` must rebuild the graph from scratch on each call: with a tape it is
// the analytic pass, with nullptr it is a plain forward evaluation.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double analytic_at_max = 0.0;
  double numeric_at_max = 0.0;
  std::string where;
};

template <class Fn>
GradCheckReport grad_check(Fn&& fn, std::vector<Tensor<double>*> inputs, double eps = 1e-3) {
  GradCheckReport rep;

  Tape<double> tape;
  for (auto* in : inputs) tape.watch(*in);
  Tensor<double> loss = fn(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto* in : inputs) analytic.push_back(tape.grad_or_zeros(*in));
  for (auto* in : inputs) in->node = -1;

  for (size_t k = 0; k < inputs.size(); ++k) {
    auto& x = *inputs[k];
    for (int64_t i = 0; i < x.numel(); ++i) {
      double keep = x[i];
      x[i] = keep + eps;
      double up = fn(static_cast<Tape<double>*>(nullptr))[0];
      x[i] = keep - eps;
      double dn = fn(static_cast<Tape<double>*>(nullptr))[0];
      x[i] = keep;
      double num = (up - dn) / (2.0 * eps);
      double ana = analytic[k][i];
      double err = std::abs(ana - num) / std::max(1e-8, std::abs(ana) + std::abs(num));
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.analytic_at_max = ana;
        rep.numeric_at_max = num;
        rep.where = "input " + std::to_string(k) + " flat " + std::to_string(i);
      }
    }
  }
  return rep;
}

}  // namespace glide
