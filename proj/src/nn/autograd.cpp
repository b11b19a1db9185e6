#include "scalenet/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>
#include <utility>

namespace scalenet::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void check_finite([[maybe_unused]] const Tensor<T>& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (T v : t.values()) {
    if (!std::isfinite(v)) throw Error(std::string(op) + ": produced a non-finite value");
  }
#endif
}

template <typename T>
NodePtr<T> make_node(Tensor<T> value, std::initializer_list<NodePtr<T>> inputs) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in && in->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) {
      if (in) node->inputs.push_back(in);
    }
  }
  return node;
}

template <typename T>
NodePtr<T> make_node(Tensor<T> value, const std::vector<NodePtr<T>>& inputs) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) node->inputs = inputs;
  return node;
}

// Gradient target of an input, or a throwaway buffer when it is not needed.
template <typename T>
T* grad_or(Node<T>* in, AlignedVector<T>& sink) {
  if (in && in->requires_grad) return in->grad_buffer().data();
  if (!in) return nullptr;
  sink.assign(in->value.size(), T(0));
  return sink.data();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Split `shape` into (outer, axis extent, inner).
std::tuple<std::size_t, std::size_t, std::size_t> split_axis(const Shape& shape, std::size_t axis) {
  require(axis < shape.size(), "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, shape[axis], inner};
}

}  // namespace

// ---------------------------------------------------------------------------
// leaves & backward

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> param(Parameter<T>& p) {
  auto node = std::make_shared<Node<T>>();
  node->value = p.value;
  node->requires_grad = true;
  node->param = &p;
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss || loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss ? shape_str(loss.shape()) : std::string("<null>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives inputs before consumers.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (Node<T>* node : order) {
    if (node->param && !node->grad.empty()) {
      auto& dst = node->param->grad;
      if (dst.shape() != node->grad.shape()) dst = Tensor<T>(node->grad.shape());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node->grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// convolution & correlation

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, ConvGeometry geom) {
  const Conv2dShape s = conv2d_shape(x.shape(), w.shape(), geom);
  if (bias) {
    require(bias.shape() == Shape{s.out_channels},
            "conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                std::to_string(s.out_channels) + " output channels");
  }
  Tensor<T> y(Shape{s.batch, s.out_channels, s.out_h, s.out_w});
  kernels::conv2d_forward(x.value().data(), w.value().data(),
                          bias ? bias.value().data() : nullptr, y.data(), s);
  check_finite(y, "conv2d");
  auto node = make_node<T>(std::move(y), {x.ptr(), w.ptr(), bias ? bias.ptr() : nullptr});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), wn = w.node(), bn = bias ? bias.node() : nullptr,
                      s](Node<T>& self) {
      AlignedVector<T> sink_w;
      T* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
      T* dw = grad_or(wn, sink_w);
      T* db = (bn && bn->requires_grad) ? bn->grad_buffer().data() : nullptr;
      kernels::conv2d_backward(xn->value.data(), wn->value.data(), self.grad.data(), dx, dw, db, s);
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> correlate(const Var<T>& src, const Var<T>& tgt) {
  const CorrelationShape s = correlation_shape(src.shape(), tgt.shape());
  Tensor<T> y(Shape{s.batch, s.positions(), s.h, s.w});
  kernels::correlation_forward(src.value().data(), tgt.value().data(), y.data(), s);
  check_finite(y, "correlate");
  auto node = make_node<T>(std::move(y), {src.ptr(), tgt.ptr()});
  if (node->requires_grad) {
    node->backward = [sn = src.node(), tn = tgt.node(), s](Node<T>& self) {
      AlignedVector<T> sink_s, sink_t;
      T* ds = grad_or(sn, sink_s);
      T* dt = grad_or(tn, sink_t);
      kernels::correlation_backward(sn->value.data(), tn->value.data(), self.grad.data(), ds, dt, s);
    };
  }
  return Var<T>(node);
}

// ---------------------------------------------------------------------------
// pointwise & pooling

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  const auto xv = x.value().values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node()](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (self.value[i] > T(0)) dx[i] += self.grad[i];
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> max_pool2(const Var<T>& x) {
  require(x.shape().size() == 4, "max_pool2: input must be NCHW, got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t oh = h / 2, ow = w / 2;
  require(oh > 0 && ow > 0, "max_pool2: input too small " + shape_str(x.shape()));
  Tensor<T> y(Shape{n, c, oh, ow});
  std::vector<std::uint32_t> argmax(y.size());
  const T* xv = x.value().data();
  const long planes = static_cast<long>(n * c);
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const T* xp = xv + pl * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (2 * i + di) * w + 2 * j + dj;
            if (xp[idx] > xp[best]) best = idx;
          }
        }
        const std::size_t o = (pl * oh + i) * ow + j;
        y[o] = xp[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), argmax = std::move(argmax), plane_in = h * w,
                      plane_out = oh * ow](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t o = 0; o < self.grad.size(); ++o) {
        dx[(o / plane_out) * plane_in + argmax[o]] += self.grad[o];
      }
    };
  }
  return Var<T>(node);
}

// ---------------------------------------------------------------------------
// dense

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require(x.shape().size() == 2 && w.shape().size() == 2 && x.shape()[1] == w.shape()[1],
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(w.shape()));
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[0];
  if (b) require(b.shape() == Shape{m}, "linear: bias shape " + shape_str(b.shape()));
  Tensor<T> y(Shape{n, m});
  Eigen::Map<const RowMat<T>> xm(x.value().data(), n, k), wm(w.value().data(), m, k);
  Eigen::Map<RowMat<T>> ym(y.data(), n, m);
  ym.noalias() = xm * wm.transpose();
  if (b) ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().data(), m);
  check_finite(y, "linear");
  auto node = make_node<T>(std::move(y), {x.ptr(), w.ptr(), b ? b.ptr() : nullptr});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), wn = w.node(), bn = b ? b.node() : nullptr, n, k,
                      m](Node<T>& self) {
      Eigen::Map<const RowMat<T>> g(self.grad.data(), n, m);
      if (xn->requires_grad) {
        Eigen::Map<RowMat<T>>(xn->grad_buffer().data(), n, k).noalias() +=
            g * Eigen::Map<const RowMat<T>>(wn->value.data(), m, k);
      }
      if (wn->requires_grad) {
        Eigen::Map<RowMat<T>>(wn->grad_buffer().data(), m, k).noalias() +=
            g.transpose() * Eigen::Map<const RowMat<T>>(xn->value.data(), n, k);
      }
      if (bn && bn->requires_grad) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bn->grad_buffer().data(), m) +=
            g.colwise().sum();
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  require(!x.shape().empty(), "softmax: scalar input");
  const std::size_t len = x.shape().back(), rows = x.value().size() / len;
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * len;
    T* yr = y.data() + r * len;
    const T mx = *std::max_element(xr, xr + len);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += std::exp(static_cast<double>(xr[i] - mx));
    for (std::size_t i = 0; i < len; ++i) {
      yr[i] = static_cast<T>(std::exp(static_cast<double>(xr[i] - mx)) / sum);
    }
  }
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), len, rows](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = self.value.data() + r * len;
        const T* gr = self.grad.data() + r * len;
        T dot = 0;
        for (std::size_t i = 0; i < len; ++i) dot += yr[i] * gr[i];
        for (std::size_t i = 0; i < len; ++i) dx[r * len + i] += yr[i] * (gr[i] - dot);
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x, std::size_t axis, double eps) {
  const auto [outer, len, inner] = split_axis(x.shape(), axis);
  Tensor<T> y(x.shape());
  AlignedVector<T> norms(outer * inner);
  const T* xv = x.value().data();
  const long outer_l = static_cast<long>(outer);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < outer_l; ++o) {
    std::vector<double> acc(inner, 0.0);
    const T* xo = xv + o * len * inner;
    for (std::size_t k = 0; k < len; ++k) {
      const T* row = xo + k * inner;
      for (std::size_t i = 0; i < inner; ++i) acc[i] += static_cast<double>(row[i]) * row[i];
    }
    T* no = norms.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) no[i] = static_cast<T>(std::max(std::sqrt(acc[i]), eps));
    T* yo = y.data() + o * len * inner;
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t i = 0; i < inner; ++i) yo[k * inner + i] = xo[k * inner + i] / no[i];
    }
  }
  check_finite(y, "l2_normalize");
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), norms = std::move(norms), outer, len, inner,
                      eps](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      const long outer_l = static_cast<long>(outer);
#pragma omp parallel for schedule(static)
      for (long o = 0; o < outer_l; ++o) {
        const std::size_t base = o * len * inner;
        std::vector<double> dot(inner, 0.0);
        for (std::size_t k = 0; k < len; ++k) {
          for (std::size_t i = 0; i < inner; ++i) {
            dot[i] += static_cast<double>(self.value[base + k * inner + i]) *
                      self.grad[base + k * inner + i];
          }
        }
        for (std::size_t k = 0; k < len; ++k) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t idx = base + k * inner + i;
            const T nrm = norms[o * inner + i];
            // Below eps the norm is the constant eps, so only the direct term remains.
            const bool clamped = !(static_cast<double>(nrm) > eps);
            const double proj = clamped ? 0.0 : self.value[idx] * dot[i];
            dx[idx] += static_cast<T>((self.grad[idx] - proj) / nrm);
          }
        }
      }
    };
  }
  return Var<T>(node);
}

// ---------------------------------------------------------------------------
// shape plumbing

template <typename T>
Var<T> flatten(const Var<T>& x) {
  require(x.shape().size() >= 2, "flatten: need a batch axis, got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0];
  auto node = make_node<T>(x.value().reshaped(Shape{n, x.value().size() / n}), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node()](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> concat(std::span<const Var<T>> xs, std::size_t axis) {
  require(!xs.empty(), "concat: no inputs");
  const Shape& first = xs[0].shape();
  require(axis < first.size(), "concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    require(ok, "concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
    out_shape[axis] += s[axis];
  }
  const auto [outer, total, inner] = split_axis(out_shape, axis);
  Tensor<T> y(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t chunk = x.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.value().data() + o * chunk, chunk, y.data() + o * total * inner + off);
    }
    off += chunk;
  }
  std::vector<NodePtr<T>> inputs;
  for (const auto& x : xs) inputs.push_back(x.ptr());
  auto node = make_node<T>(std::move(y), inputs);
  if (node->requires_grad) {
    node->backward = [offsets, outer = outer, total = total, inner = inner, axis](Node<T>& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        Node<T>* in = self.inputs[k].get();
        if (!in->requires_grad) continue;
        auto& dx = in->grad_buffer();
        const std::size_t chunk = in->value.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const T* g = self.grad.data() + o * total * inner + offsets[k];
          T* d = dx.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) d[i] += g[i];
        }
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> slice_batch(const Var<T>& x, std::size_t begin, std::size_t end) {
  require(!x.shape().empty() && begin < end && end <= x.shape()[0],
          "slice_batch: [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") out of range for " + shape_str(x.shape()));
  Shape shape = x.shape();
  const std::size_t row = x.value().size() / shape[0];
  shape[0] = end - begin;
  Tensor<T> y(shape);
  std::copy_n(x.value().data() + begin * row, y.size(), y.data());
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), offset = begin * row](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[offset + i] += self.grad[i];
    };
  }
  return Var<T>(node);
}

// ---------------------------------------------------------------------------
// batch norm

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, const BatchNormOptions& opt) {
  const Shape& s = x.shape();
  require(s.size() == 2 || s.size() == 4, "batch_norm: input must be NC or NCHW, got " + shape_str(s));
  const std::size_t n = s[0], c = s[1], hw = s.size() == 4 ? s[2] * s[3] : 1;
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
          "batch_norm: affine parameters must have shape [" + std::to_string(c) + "]");
  require(state.running_mean.size() == c && state.running_var.size() == c,
          "batch_norm: running statistics sized for a different channel count");
  const std::size_t count = n * hw;
  std::vector<double> mean(c), inv_std(c);
  const T* xv = x.value().data();
  if (opt.training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += p[i];
      }
      const double mu = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / count;
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + opt.eps);
      // A single value carries no variance information; leave the running
      // statistics alone rather than pulling the variance toward zero.
      if (count > 1) {
        const double unbiased = sq / (count - 1);
        state.running_mean[ch] =
            static_cast<T>(opt.momentum * state.running_mean[ch] + (1.0 - opt.momentum) * mu);
        state.running_var[ch] =
            static_cast<T>(opt.momentum * state.running_var[ch] + (1.0 - opt.momentum) * unbiased);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + opt.eps);
    }
  }
  Tensor<T> xhat(s), y(s);
  const T* g = gamma.value().data();
  const T* bt = beta.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((xv[base + i] - mean[ch]) * inv_std[ch]);
        xhat[base + i] = xh;
        y[base + i] = g[ch] * xh + bt[ch];
      }
    }
  }
  check_finite(y, "batch_norm");
  auto node = make_node<T>(std::move(y), {x.ptr(), gamma.ptr(), beta.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                      inv_std = std::move(inv_std), n, c, hw, count,
                      training = opt.training](Node<T>& self) {
      std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum_g[ch] += self.grad[base + i];
            sum_gx[ch] += static_cast<double>(self.grad[base + i]) * xhat[base + i];
          }
        }
      }
      if (gn->requires_grad) {
        auto& dg = gn->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<T>(sum_gx[ch]);
      }
      if (bn->requires_grad) {
        auto& db = bn->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) db[ch] += static_cast<T>(sum_g[ch]);
      }
      if (!xn->requires_grad) return;
      auto& dx = xn->grad_buffer();
      const T* gam = gn->value.data();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (b * c + ch) * hw;
          const double scale = gam[ch] * inv_std[ch];
          for (std::size_t i = 0; i < hw; ++i) {
            const double gi = self.grad[base + i];
            const double d = training ? scale * (gi - sum_g[ch] / count -
                                                 xhat[base + i] * sum_gx[ch] / count)
                                      : scale * gi;
            dx[base + i] += static_cast<T>(d);
          }
        }
      }
    };
  }
  return Var<T>(node);
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
Var<T> kl_div_loss(const Var<T>& logits, const Tensor<T>& target) {
  require(logits.shape().size() == 2 && logits.shape() == target.shape(),
          "kl_div_loss: logits " + shape_str(logits.shape()) + " vs target " +
              shape_str(target.shape()));
  const std::size_t n = logits.shape()[0], len = logits.shape()[1];
  AlignedVector<T> probs(n * len);
  std::vector<double> target_mass(n, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.value().data() + r * len;
    const T* t = target.data() + r * len;
    const double mx = *std::max_element(z, z + len);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += std::exp(z[i] - mx);
    const double log_sum = std::log(sum);
    for (std::size_t i = 0; i < len; ++i) {
      const double log_p = z[i] - mx - log_sum;
      probs[r * len + i] = static_cast<T>(std::exp(log_p));
      if (t[i] > T(0)) {
        total += t[i] * (std::log(static_cast<double>(t[i])) - log_p);
        target_mass[r] += t[i];
      }
    }
  }
  Tensor<T> y(Shape{1}, static_cast<T>(total / n));
  check_finite(y, "kl_div_loss");
  auto node = make_node<T>(std::move(y), {logits.ptr()});
  if (node->requires_grad) {
    node->backward = [zn = logits.node(), target, probs = std::move(probs),
                      target_mass = std::move(target_mass), n, len](Node<T>& self) {
      auto& dz = zn->grad_buffer();
      const double g = static_cast<double>(self.grad[0]) / n;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t k = r * len + i;
          dz[k] += static_cast<T>(g * (probs[k] * target_mass[r] - target[k]));
        }
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> mse_loss(const Var<T>& x, const Tensor<T>& target) {
  require(x.shape() == target.shape(),
          "mse_loss: " + shape_str(x.shape()) + " vs " + shape_str(target.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(x.value()[i]) - target[i];
    acc += d * d;
  }
  Tensor<T> y(Shape{1}, static_cast<T>(acc / target.size()));
  auto node = make_node<T>(std::move(y), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), target](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      const double g = 2.0 * self.grad[0] / target.size();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] += static_cast<T>(g * (static_cast<double>(xn->value[i]) - target[i]));
      }
    };
  }
  return Var<T>(node);
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require(x.shape() == weights.shape(),
          "weighted_sum: " + shape_str(x.shape()) + " vs " + shape_str(weights.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += static_cast<double>(x.value()[i]) * weights[i];
  auto node = make_node<T>(Tensor<T>(Shape{1}, static_cast<T>(acc)), {x.ptr()});
  if (node->requires_grad) {
    node->backward = [xn = x.node(), weights](Node<T>& self) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[0] * weights[i];
    };
  }
  return Var<T>(node);
}

#define SCALENET_INSTANTIATE(T)                                                                  \
  template Var<T> constant<T>(Tensor<T>);                                                        \
  template Var<T> leaf<T>(Tensor<T>);                                                            \
  template Var<T> param<T>(Parameter<T>&);                                                       \
  template void backward<T>(const Var<T>&);                                                      \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);          \
  template Var<T> relu<T>(const Var<T>&);                                                        \
  template Var<T> max_pool2<T>(const Var<T>&);                                                   \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> softmax<T>(const Var<T>&);                                                     \
  template Var<T> l2_normalize<T>(const Var<T>&, std::size_t, double);                           \
  template Var<T> flatten<T>(const Var<T>&);                                                     \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                               \
  template Var<T> slice_batch<T>(const Var<T>&, std::size_t, std::size_t);                       \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, \
                                const BatchNormOptions&);                                        \
  template Var<T> correlate<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> kl_div_loss<T>(const Var<T>&, const Tensor<T>&);                               \
  template Var<T> mse_loss<T>(const Var<T>&, const Tensor<T>&);                                  \
  template Var<T> weighted_sum<T>(const Var<T>&, const Tensor<T>&);

SCALENET_INSTANTIATE(float)
SCALENET_INSTANTIATE(double)
#undef SCALENET_INSTANTIATE

}  // namespace scalenet::nn
