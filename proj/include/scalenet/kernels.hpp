#pragma once

// Compute kernels behind the autograd primitives.
//
// Two implementations share each signature:
//   scalenet::nn::kernels    im2col + GEMM, OpenMP-parallel over the batch
//   scalenet::nn::reference  direct loops, serial; the oracle for tests and
//                            the baseline for bench/
//
// All backward kernels accumulate (+=) into their gradient outputs. Batch
// reductions (weight and bias gradients) are summed in sample order, so
// results do not depend on the thread count.

#include <cstddef>

#include "scalenet/tensor.hpp"

namespace scalenet::nn {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

struct Conv2dShape {
  std::size_t batch = 0, in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t out_h = 0, out_w = 0;
  ConvGeometry geom;

  std::size_t patch_size() const noexcept { return in_channels * kernel_h * kernel_w; }
  std::size_t out_pixels() const noexcept { return out_h * out_w; }
};

// Validates NCHW input against (C_out, C_in, kH, kW) weights; ShapeError lists both shapes.
// Output extent: floor((in + 2p - d(k-1) - 1) / s) + 1.
Conv2dShape conv2d_shape(const Shape& input, const Shape& weight, ConvGeometry geom);

// Correlation of two N x C x H x W maps into N x (H*W) x H x W.
struct CorrelationShape {
  std::size_t batch = 0, channels = 0, h = 0, w = 0;
  std::size_t positions() const noexcept { return h * w; }
};
CorrelationShape correlation_shape(const Shape& src, const Shape& tgt);

namespace kernels {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s);

// dx and dbias may be null.
template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const Conv2dShape& s);

// out[n, hs*W+ws, ht, wt] = <src[n, :, hs, ws], tgt[n, :, ht, wt]>
template <typename T>
void correlation_forward(const T* src, const T* tgt, T* out, const CorrelationShape& s);

template <typename T>
void correlation_backward(const T* src, const T* tgt, const T* dout, T* dsrc, T* dtgt,
                          const CorrelationShape& s);

// c[m, n] = sum_k a[m, k] * b[n, k] for row-major a (M x K) and b (N x K).
template <typename T>
void gemm_abt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k);

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s);

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const Conv2dShape& s);

template <typename T>
void correlation_forward(const T* src, const T* tgt, T* out, const CorrelationShape& s);

template <typename T>
void correlation_backward(const T* src, const T* tgt, const T* dout, T* dsrc, T* dtgt,
                          const CorrelationShape& s);

template <typename T>
void gemm_abt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k);

}  // namespace reference

}  // namespace scalenet::nn
