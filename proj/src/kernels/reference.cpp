// Serial nested-loop kernels. Slow and obviously correct; used as the
// comparison baseline in tests and kernel_bench.

#include <algorithm>
#include <cmath>

#include "fsg/kernels.hpp"

namespace fsg::kernels {

template <typename T>
void conv2d_forward_reference(const ConvGeometry& g, const T* x, const T* weight, const T* bias,
                              T* y) {
  g.validate();
  const int n = g.input.n, c = g.input.c, h = g.input.h, w = g.input.w;
  const int oc = g.out_c, oh = g.out_h(), ow = g.out_w(), icg = g.in_per_group();
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < oc; ++o) {
      const int first_in = g.groups == 1 ? 0 : o;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[o] : T(0);
          for (int i = 0; i < icg; ++i) {
            const int ch = first_in + i;
            for (int ki = 0; ki < g.kh; ++ki) {
              for (int kj = 0; kj < g.kw; ++kj) {
                const int iy = oy * g.stride + ki - g.pad.top;
                const int ix = ox * g.stride + kj - g.pad.left;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += weight[((o * icg + i) * g.kh + ki) * g.kw + kj] *
                       x[((static_cast<std::size_t>(b) * c + ch) * h + iy) * w + ix];
              }
            }
          }
          y[((static_cast<std::size_t>(b) * oc + o) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_reference(const ConvGeometry& g, const T* x, const T* weight, const T* dy,
                               T* dx, T* dweight, T* dbias) {
  g.validate();
  const int n = g.input.n, c = g.input.c, h = g.input.h, w = g.input.w;
  const int oc = g.out_c, oh = g.out_h(), ow = g.out_w(), icg = g.in_per_group();
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < oc; ++o) {
      const int first_in = g.groups == 1 ? 0 : o;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const T gy = dy[((static_cast<std::size_t>(b) * oc + o) * oh + oy) * ow + ox];
          if (dbias) dbias[o] += gy;
          for (int i = 0; i < icg; ++i) {
            const int ch = first_in + i;
            for (int ki = 0; ki < g.kh; ++ki) {
              for (int kj = 0; kj < g.kw; ++kj) {
                const int iy = oy * g.stride + ki - g.pad.top;
                const int ix = ox * g.stride + kj - g.pad.left;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const std::size_t xi = ((static_cast<std::size_t>(b) * c + ch) * h + iy) * w + ix;
                const std::size_t wi = ((o * icg + i) * g.kh + ki) * g.kw + kj;
                if (dweight) dweight[wi] += gy * x[xi];
                if (dx) dx[xi] += gy * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void max_pool_forward_reference(const PoolGeometry& g, const T* x, T* y) {
  g.validate();
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  for (int p = 0; p < g.input.n * g.input.c; ++p) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T best = x[(static_cast<std::size_t>(p) * h + oy * g.stride) * w + ox * g.stride];
        for (int ki = 0; ki < g.kernel; ++ki) {
          for (int kj = 0; kj < g.kernel; ++kj) {
            best = std::max(best, x[(static_cast<std::size_t>(p) * h + oy * g.stride + ki) * w +
                                    ox * g.stride + kj]);
          }
        }
        y[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] = best;
      }
    }
  }
}

template <typename T>
void avg_pool_forward_reference(const PoolGeometry& g, const T* x, T* y) {
  g.validate();
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  for (int p = 0; p < g.input.n * g.input.c; ++p) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T acc = 0;
        for (int ki = 0; ki < g.kernel; ++ki) {
          for (int kj = 0; kj < g.kernel; ++kj) {
            acc += x[(static_cast<std::size_t>(p) * h + oy * g.stride + ki) * w + ox * g.stride +
                     kj];
          }
        }
        y[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] =
            acc / static_cast<T>(g.kernel * g.kernel);
      }
    }
  }
}

template <typename T>
void upsample_forward_reference(Shape in, int factor, Interp mode, const T* x, T* y) {
  const int h = in.h, w = in.w, oh = h * factor, ow = w * factor;
  auto src_coord = [factor](int o, int extent, int& i0, int& i1, T& frac) {
    T s = (static_cast<T>(o) + T(0.5)) / static_cast<T>(factor) - T(0.5);
    s = std::max(s, T(0));
    i0 = std::min(static_cast<int>(std::floor(s)), extent - 1);
    i1 = std::min(i0 + 1, extent - 1);
    frac = s - static_cast<T>(i0);
  };
  for (int p = 0; p < in.n * in.c; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T v;
        if (mode == Interp::kNearest) {
          v = src[(oy / factor) * w + ox / factor];
        } else {
          int y0, y1, x0, x1;
          T fy, fx;
          src_coord(oy, h, y0, y1, fy);
          src_coord(ox, w, x0, x1, fx);
          v = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
              fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
        }
        y[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] = v;
      }
    }
  }
}

#define FSG_INSTANTIATE(T)                                                                      \
  template void conv2d_forward_reference(const ConvGeometry&, const T*, const T*, const T*,     \
                                         T*);                                                   \
  template void conv2d_backward_reference(const ConvGeometry&, const T*, const T*, const T*,    \
                                          T*, T*, T*);                                          \
  template void max_pool_forward_reference(const PoolGeometry&, const T*, T*);                  \
  template void avg_pool_forward_reference(const PoolGeometry&, const T*, T*);                  \
  template void upsample_forward_reference(Shape, int, Interp, const T*, T*);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg::kernels
