#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <vector>

#include "scalenet/kernels.hpp"

namespace scalenet::nn::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

bool is_pointwise(const Conv2dShape& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.geom.stride == 1 && s.geom.padding == 0;
}

// Scratch reused across calls; one per thread.
template <typename T>
T* scratch(std::size_t count, int slot) {
  thread_local AlignedVector<T> buffers[2];
  auto& buf = buffers[slot];
  if (buf.size() < count) buf.resize(count);
  return buf.data();
}

// Output rows per band so one band of columns stays cache resident.
std::size_t band_rows(const Conv2dShape& s, std::size_t elem_size) {
  constexpr std::size_t kBandBytes = 512 * 1024;
  const std::size_t row_bytes = s.patch_size() * s.out_w * elem_size;
  return std::clamp<std::size_t>(kBandBytes / std::max<std::size_t>(row_bytes, 1), 1, s.out_h);
}

// For output rows [oh0, oh1), with cp = (oh1 - oh0) * OW columns:
// col[(c*kh + ki)*kw + kj][(oh - oh0)*OW + ow] = x[c][oh*s - p + ki*d][ow*s - p + kj*d] (0 outside)
template <typename T>
void im2col(const T* x, T* col, const Conv2dShape& s, std::size_t oh0, std::size_t oh1) {
  const long stride = s.geom.stride, pad = s.geom.padding, dil = s.geom.dilation;
  const long in_h = static_cast<long>(s.in_h), in_w = static_cast<long>(s.in_w);
  const std::size_t ow_n = s.out_w, cp = (oh1 - oh0) * ow_n;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const T* xc = x + c * s.in_h * s.in_w;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        T* dst = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * cp;
        const long col_off = static_cast<long>(kj) * dil - pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki) * dil;
          T* row = dst + (oh - oh0) * ow_n;
          if (ih < 0 || ih >= in_h) {
            std::fill(row, row + ow_n, T(0));
            continue;
          }
          const T* xr = xc + ih * in_w;
          if (stride == 1) {
            // valid ow range: 0 <= ow + col_off < in_w
            const long lo = std::clamp<long>(-col_off, 0, static_cast<long>(ow_n));
            const long hi = std::clamp<long>(in_w - col_off, lo, static_cast<long>(ow_n));
            std::fill(row, row + lo, T(0));
            std::copy(xr + lo + col_off, xr + hi + col_off, row + lo);
            std::fill(row + hi, row + ow_n, T(0));
          } else {
            for (std::size_t ow = 0; ow < ow_n; ++ow) {
              const long iw = static_cast<long>(ow) * stride + col_off;
              row[ow] = (iw >= 0 && iw < in_w) ? xr[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, T* dx, const Conv2dShape& s, std::size_t oh0, std::size_t oh1) {
  const long stride = s.geom.stride, pad = s.geom.padding, dil = s.geom.dilation;
  const long in_h = static_cast<long>(s.in_h), in_w = static_cast<long>(s.in_w);
  const std::size_t ow_n = s.out_w, cp = (oh1 - oh0) * ow_n;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    T* dxc = dx + c * s.in_h * s.in_w;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        const T* src = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * cp;
        const long col_off = static_cast<long>(kj) * dil - pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki) * dil;
          if (ih < 0 || ih >= in_h) continue;
          const T* row = src + (oh - oh0) * ow_n;
          T* dr = dxc + ih * in_w;
          if (stride == 1) {
            const long lo = std::clamp<long>(-col_off, 0, static_cast<long>(ow_n));
            const long hi = std::clamp<long>(in_w - col_off, lo, static_cast<long>(ow_n));
            for (long ow = lo; ow < hi; ++ow) dr[ow + col_off] += row[ow];
          } else {
            for (std::size_t ow = 0; ow < ow_n; ++ow) {
              const long iw = static_cast<long>(ow) * stride + col_off;
              if (iw >= 0 && iw < in_w) dr[iw] += row[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s) {
  const std::size_t k = s.patch_size(), p = s.out_pixels();
  const std::size_t in_size = s.in_channels * s.in_h * s.in_w, out_size = s.out_channels * p;
  const bool pointwise = is_pointwise(s);
  const std::size_t band = band_rows(s, sizeof(T));
  const long batch = static_cast<long>(s.batch);
  Eigen::Map<const RowMat<T>> wm(w, s.out_channels, k);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    const T* xn = x + n * in_size;
    T* yn = y + n * out_size;
    if (pointwise) {
      Eigen::Map<RowMat<T>>(yn, s.out_channels, p).noalias() =
          wm * Eigen::Map<const RowMat<T>>(xn, k, p);
    } else {
      T* col = scratch<T>(k * band * s.out_w, 0);
      for (std::size_t oh0 = 0; oh0 < s.out_h; oh0 += band) {
        const std::size_t oh1 = std::min(s.out_h, oh0 + band), cp = (oh1 - oh0) * s.out_w;
        im2col(xn, col, s, oh0, oh1);
        StridedMap<T>(yn + oh0 * s.out_w, s.out_channels, cp, Eigen::OuterStride<>(p)).noalias() =
            wm * Eigen::Map<const RowMat<T>>(col, k, cp);
      }
    }
    if (bias) {
      Eigen::Map<RowMat<T>>(yn, s.out_channels, p).colwise() +=
          Eigen::Map<const Vec<T>>(bias, s.out_channels);
    }
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const Conv2dShape& s) {
  const std::size_t k = s.patch_size(), p = s.out_pixels();
  const std::size_t in_size = s.in_channels * s.in_h * s.in_w, out_size = s.out_channels * p;
  const std::size_t w_size = s.out_channels * k;
  const bool pointwise = is_pointwise(s);
  const std::size_t band = band_rows(s, sizeof(T));
  const long batch = static_cast<long>(s.batch);
  AlignedVector<T> dw_parts(s.batch * w_size);
  AlignedVector<T> db_parts(dbias ? s.batch * s.out_channels : 0);
  Eigen::Map<const RowMat<T>> wm(w, s.out_channels, k);

#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    const T* xn = x + n * in_size;
    const T* gn = dy + n * out_size;
    Eigen::Map<RowMat<T>> dwn(dw_parts.data() + n * w_size, s.out_channels, k);
    if (dbias) {
      Eigen::Map<Vec<T>>(db_parts.data() + n * s.out_channels, s.out_channels) =
          Eigen::Map<const RowMat<T>>(gn, s.out_channels, p).rowwise().sum();
    }
    if (pointwise) {
      Eigen::Map<const RowMat<T>> gm(gn, s.out_channels, p);
      dwn.noalias() = gm * Eigen::Map<const RowMat<T>>(xn, k, p).transpose();
      if (dx) Eigen::Map<RowMat<T>>(dx + n * in_size, k, p).noalias() += wm.transpose() * gm;
      continue;
    }
    dwn.setZero();
    T* col = scratch<T>(k * band * s.out_w, 0);
    T* dcol = dx ? scratch<T>(k * band * s.out_w, 1) : nullptr;
    for (std::size_t oh0 = 0; oh0 < s.out_h; oh0 += band) {
      const std::size_t oh1 = std::min(s.out_h, oh0 + band), cp = (oh1 - oh0) * s.out_w;
      ConstStridedMap<T> gm(gn + oh0 * s.out_w, s.out_channels, cp, Eigen::OuterStride<>(p));
      im2col(xn, col, s, oh0, oh1);
      dwn.noalias() += gm * Eigen::Map<const RowMat<T>>(col, k, cp).transpose();
      if (dx) {
        Eigen::Map<RowMat<T>>(dcol, k, cp).noalias() = wm.transpose() * gm;
        col2im_add(dcol, dx + n * in_size, s, oh0, oh1);
      }
    }
  }

  for (std::size_t n = 0; n < s.batch; ++n) {
    const T* part = dw_parts.data() + n * w_size;
    for (std::size_t i = 0; i < w_size; ++i) dw[i] += part[i];
    if (dbias) {
      const T* bpart = db_parts.data() + n * s.out_channels;
      for (std::size_t i = 0; i < s.out_channels; ++i) dbias[i] += bpart[i];
    }
  }
}

template <typename T>
void correlation_forward(const T* src, const T* tgt, T* out, const CorrelationShape& s) {
  const std::size_t hw = s.positions(), in_size = s.channels * hw;
  const long batch = static_cast<long>(s.batch);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    Eigen::Map<const RowMat<T>> a(src + n * in_size, s.channels, hw);
    Eigen::Map<const RowMat<T>> b(tgt + n * in_size, s.channels, hw);
    Eigen::Map<RowMat<T>>(out + n * hw * hw, hw, hw).noalias() = a.transpose() * b;
  }
}

template <typename T>
void correlation_backward(const T* src, const T* tgt, const T* dout, T* dsrc, T* dtgt,
                          const CorrelationShape& s) {
  const std::size_t hw = s.positions(), in_size = s.channels * hw;
  const long batch = static_cast<long>(s.batch);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    Eigen::Map<const RowMat<T>> a(src + n * in_size, s.channels, hw);
    Eigen::Map<const RowMat<T>> b(tgt + n * in_size, s.channels, hw);
    Eigen::Map<const RowMat<T>> g(dout + n * hw * hw, hw, hw);
    Eigen::Map<RowMat<T>>(dsrc + n * in_size, s.channels, hw).noalias() += b * g.transpose();
    Eigen::Map<RowMat<T>>(dtgt + n * in_size, s.channels, hw).noalias() += a * g;
  }
}

template <typename T>
void gemm_abt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  Eigen::Map<const RowMat<T>> am(a, m, k);
  Eigen::Map<const RowMat<T>> bm(b, n, k);
  Eigen::Map<RowMat<T>> cm(c, m, n);
  // Row blocks are independent, so the split does not change any result.
  const long blocks = static_cast<long>((m + 63) / 64);
#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * 64;
    const std::size_t rows = std::min<std::size_t>(64, m - r0);
    cm.middleRows(r0, rows).noalias() = am.middleRows(r0, rows) * bm.transpose();
  }
}

#define SCALENET_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const T*, const T*, const T*, T*, const Conv2dShape&);         \
  template void conv2d_backward<T>(const T*, const T*, const T*, T*, T*, T*, const Conv2dShape&); \
  template void correlation_forward<T>(const T*, const T*, T*, const CorrelationShape&);         \
  template void correlation_backward<T>(const T*, const T*, const T*, T*, T*,                    \
                                        const CorrelationShape&);                                \
  template void gemm_abt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t);

SCALENET_INSTANTIATE(float)
SCALENET_INSTANTIATE(double)
#undef SCALENET_INSTANTIATE

}  // namespace scalenet::nn::kernels
