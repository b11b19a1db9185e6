// Serial direct-loop kernels. Kept deliberately plain: these are the oracle
// the parallel kernels are tested against.

#include "scalenet/kernels.hpp"

namespace scalenet::nn::reference {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s) {
  const long stride = s.geom.stride, pad = s.geom.padding, dil = s.geom.dilation;
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      for (std::size_t oh = 0; oh < s.out_h; ++oh) {
        for (std::size_t ow = 0; ow < s.out_w; ++ow) {
          T acc = bias ? bias[co] : T(0);
          for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
              const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki) * dil;
              if (ih < 0 || ih >= static_cast<long>(s.in_h)) continue;
              for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(kj) * dil;
                if (iw < 0 || iw >= static_cast<long>(s.in_w)) continue;
                acc += x[((n * s.in_channels + ci) * s.in_h + ih) * s.in_w + iw] *
                       w[((co * s.in_channels + ci) * s.kernel_h + ki) * s.kernel_w + kj];
              }
            }
          }
          y[((n * s.out_channels + co) * s.out_h + oh) * s.out_w + ow] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const Conv2dShape& s) {
  const long stride = s.geom.stride, pad = s.geom.padding, dil = s.geom.dilation;
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      for (std::size_t oh = 0; oh < s.out_h; ++oh) {
        for (std::size_t ow = 0; ow < s.out_w; ++ow) {
          const T g = dy[((n * s.out_channels + co) * s.out_h + oh) * s.out_w + ow];
          if (dbias) dbias[co] += g;
          for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
              const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki) * dil;
              if (ih < 0 || ih >= static_cast<long>(s.in_h)) continue;
              for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(kj) * dil;
                if (iw < 0 || iw >= static_cast<long>(s.in_w)) continue;
                const std::size_t xi = ((n * s.in_channels + ci) * s.in_h + ih) * s.in_w + iw;
                const std::size_t wi = ((co * s.in_channels + ci) * s.kernel_h + ki) * s.kernel_w + kj;
                dw[wi] += g * x[xi];
                if (dx) dx[xi] += g * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void correlation_forward(const T* src, const T* tgt, T* out, const CorrelationShape& s) {
  const std::size_t hw = s.positions();
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t q = 0; q < hw; ++q) {
        T acc = 0;
        for (std::size_t c = 0; c < s.channels; ++c) {
          acc += src[(n * s.channels + c) * hw + p] * tgt[(n * s.channels + c) * hw + q];
        }
        out[(n * hw + p) * hw + q] = acc;
      }
    }
  }
}

template <typename T>
void correlation_backward(const T* src, const T* tgt, const T* dout, T* dsrc, T* dtgt,
                          const CorrelationShape& s) {
  const std::size_t hw = s.positions();
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t q = 0; q < hw; ++q) {
        const T g = dout[(n * hw + p) * hw + q];
        for (std::size_t c = 0; c < s.channels; ++c) {
          const std::size_t ip = (n * s.channels + c) * hw + p;
          const std::size_t iq = (n * s.channels + c) * hw + q;
          dsrc[ip] += g * tgt[iq];
          dtgt[iq] += g * src[ip];
        }
      }
    }
  }
}

template <typename T>
void gemm_abt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
      c[i * n + j] = acc;
    }
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

}  // namespace scalenet::nn::reference
