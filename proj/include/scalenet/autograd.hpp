#pragma once

// Tape-free reverse-mode differentiation over Tensor values.
//
// Every primitive returns a Var that owns its value and, when any input
// requires a gradient, a closure propagating its output gradient back to
// its inputs. backward() orders the reachable graph topologically and runs
// the closures once each. Parameters enter the graph through param(); their
// gradients are accumulated into Parameter::grad at the end of backward().

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scalenet/kernels.hpp"
#include "scalenet/tensor.hpp"

namespace scalenet::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;  // Adam first moment
  Tensor<T> v;  // Adam second moment

  Parameter() = default;
  Parameter(std::string n, Tensor<T> init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first use
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Parameter<T>* param = nullptr;
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Leaf without gradient.
template <typename T>
Var<T> constant(Tensor<T> value);

// Leaf that records a gradient (readable through Var::grad after backward).
template <typename T>
Var<T> leaf(Tensor<T> value);

// Leaf bound to a parameter.
template <typename T>
Var<T> param(Parameter<T>& p);

// Reverse pass from a scalar (single-element) loss. ShapeError otherwise.
template <typename T>
void backward(const Var<T>& loss);

// --- primitives -------------------------------------------------------------

// NCHW input, (C_out, C_in, kH, kW) weight, optional (C_out) bias.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, ConvGeometry geom);

template <typename T>
Var<T> relu(const Var<T>& x);

// 2x2 window, stride 2; odd trailing rows/columns are dropped.
template <typename T>
Var<T> max_pool2(const Var<T>& x);

// x: (N, K), w: (M, K), b: (M) -> (N, M)
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// Over the last axis; max-subtracted.
template <typename T>
Var<T> softmax(const Var<T>& x);

// x / max(||x||_2, eps) along `axis`.
template <typename T>
Var<T> l2_normalize(const Var<T>& x, std::size_t axis, double eps = 1e-8);

// (N, ...) -> (N, prod(...))
template <typename T>
Var<T> flatten(const Var<T>& x);

template <typename T>
Var<T> concat(std::span<const Var<T>> xs, std::size_t axis);

// Rows [begin, end) of the leading axis.
template <typename T>
Var<T> slice_batch(const Var<T>& x, std::size_t begin, std::size_t end);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

// Per-channel normalization of NCHW (or NC) input. Training mode normalizes
// with batch statistics and updates `state`; eval mode uses `state`.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, const BatchNormOptions& opt);

// N x C x H x W pair -> N x (H*W) x H x W inner products (no normalization).
template <typename T>
Var<T> correlate(const Var<T>& src, const Var<T>& tgt);

// mean_n sum_i t[n,i] (ln t[n,i] - log_softmax(logits)[n,i]); target rows are distributions.
template <typename T>
Var<T> kl_div_loss(const Var<T>& logits, const Tensor<T>& target);

// mean of (x - target)^2
template <typename T>
Var<T> mse_loss(const Var<T>& x, const Tensor<T>& target);

// sum_i w_i x_i, a scalar.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

}  // namespace scalenet::nn
