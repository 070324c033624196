#include <algorithm>
#include <cmath>
#include <vector>

#include "fsg/errors.hpp"
#include "fsg/kernels.hpp"

namespace fsg::kernels {

namespace {
constexpr std::size_t kParallelThreshold = 1 << 14;
}

void PoolGeometry::validate() const {
  if (kernel <= 0 || stride <= 0) throw ShapeError("pool2d: non-positive kernel or stride");
  if (kernel > input.h || kernel > input.w) {
    throw ShapeError("pool2d: kernel " + std::to_string(kernel) + " larger than input " +
                     input.str());
  }
}

template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, std::int32_t* argmax) {
  g.validate();
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  const int planes = g.input.n * g.input.c;
#pragma omp parallel for if (g.input.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = (oy * g.stride) * w + ox * g.stride;
        T best_v = src[best];
        for (int ki = 0; ki < g.kernel; ++ki) {
          for (int kj = 0; kj < g.kernel; ++kj) {
            const int idx = (oy * g.stride + ki) * w + ox * g.stride + kj;
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        y[out_off + oy * ow + ox] = best_v;
        argmax[out_off + oy * ow + ox] = best;
      }
    }
  }
}

template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* dy, const std::int32_t* argmax, T* dx) {
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  const int planes = g.input.n * g.input.c;
#pragma omp parallel for if (g.input.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    T* dst = dx + static_cast<std::size_t>(p) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) dst[argmax[out_off + i]] += dy[out_off + i];
  }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y) {
  g.validate();
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  const int planes = g.input.n * g.input.c;
  const T inv = T(1) / static_cast<T>(g.kernel * g.kernel);
#pragma omp parallel for if (g.input.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * h * w;
    T* dst = y + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T s = 0;
        for (int ki = 0; ki < g.kernel; ++ki) {
          const T* row = src + (oy * g.stride + ki) * w + ox * g.stride;
          for (int kj = 0; kj < g.kernel; ++kj) s += row[kj];
        }
        dst[oy * ow + ox] = s * inv;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* dy, T* dx) {
  const int h = g.input.h, w = g.input.w, oh = g.out_h(), ow = g.out_w();
  const int planes = g.input.n * g.input.c;
  const T inv = T(1) / static_cast<T>(g.kernel * g.kernel);
#pragma omp parallel for if (g.input.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    T* dst = dx + static_cast<std::size_t>(p) * h * w;
    const T* src = dy + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const T v = src[oy * ow + ox] * inv;
        for (int ki = 0; ki < g.kernel; ++ki) {
          T* row = dst + (oy * g.stride + ki) * w + ox * g.stride;
          for (int kj = 0; kj < g.kernel; ++kj) row[kj] += v;
        }
      }
    }
  }
}

template <typename T>
void spatial_max(Shape s, const T* x, T* y, std::int32_t* argmax) {
  const int planes = s.n * s.c;
  const std::size_t hw = s.plane();
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const T* src = x + p * hw;
    std::size_t best = 0;
    for (std::size_t i = 1; i < hw; ++i) {
      if (src[i] > src[best]) best = i;
    }
    y[p] = src[best];
    argmax[p] = static_cast<std::int32_t>(best);
  }
}

template <typename T>
void spatial_mean(Shape s, const T* x, T* y) {
  const int planes = s.n * s.c;
  const std::size_t hw = s.plane();
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const T* src = x + p * hw;
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    y[p] = acc / static_cast<T>(hw);
  }
}

template <typename T>
void channel_max(Shape s, const T* x, T* y, std::int32_t* argmax) {
  const std::size_t hw = s.plane();
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int b = 0; b < s.n; ++b) {
    const T* base = x + static_cast<std::size_t>(b) * s.c * hw;
    T* dst = y + b * hw;
    std::int32_t* arg = argmax + b * hw;
    std::copy(base, base + hw, dst);
    std::fill(arg, arg + hw, 0);
    for (int ch = 1; ch < s.c; ++ch) {
      const T* src = base + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (src[i] > dst[i]) {
          dst[i] = src[i];
          arg[i] = ch;
        }
      }
    }
  }
}

template <typename T>
void channel_mean(Shape s, const T* x, T* y) {
  const std::size_t hw = s.plane();
  const T inv = T(1) / static_cast<T>(s.c);
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int b = 0; b < s.n; ++b) {
    const T* base = x + static_cast<std::size_t>(b) * s.c * hw;
    T* dst = y + b * hw;
    std::fill(dst, dst + hw, T(0));
    for (int ch = 0; ch < s.c; ++ch) {
      const T* src = base + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < hw; ++i) dst[i] *= inv;
  }
}

namespace {

// Per-axis source taps for bilinear upsampling: output index o reads
// lo[o] and hi[o] with weights (1 - frac[o], frac[o]).
template <typename T>
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<T> frac;
};

template <typename T>
AxisTaps<T> bilinear_taps(int in, int factor) {
  AxisTaps<T> t;
  const int out = in * factor;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    T src = (static_cast<T>(o) + T(0.5)) / static_cast<T>(factor) - T(0.5);
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - static_cast<T>(i0);
  }
  return t;
}

}  // namespace

template <typename T>
void upsample_forward(Shape in, int factor, Interp mode, const T* x, T* y) {
  const int h = in.h, w = in.w, oh = h * factor, ow = w * factor;
  const int planes = in.n * in.c;
  if (mode == Interp::kNearest) {
#pragma omp parallel for if (in.numel() * factor * factor > kParallelThreshold)
    for (int p = 0; p < planes; ++p) {
      const T* src = x + static_cast<std::size_t>(p) * h * w;
      T* dst = y + static_cast<std::size_t>(p) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const T* row = src + (oy / factor) * w;
        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = row[ox / factor];
      }
    }
    return;
  }
  const auto ty = bilinear_taps<T>(h, factor);
  const auto tx = bilinear_taps<T>(w, factor);
#pragma omp parallel for if (in.numel() * factor * factor > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * h * w;
    T* dst = y + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const T* r0 = src + ty.lo[oy] * w;
      const T* r1 = src + ty.hi[oy] * w;
      const T fy = ty.frac[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const T fx = tx.frac[ox];
        const T top = r0[tx.lo[ox]] * (1 - fx) + r0[tx.hi[ox]] * fx;
        const T bot = r1[tx.lo[ox]] * (1 - fx) + r1[tx.hi[ox]] * fx;
        dst[oy * ow + ox] = top * (1 - fy) + bot * fy;
      }
    }
  }
}

template <typename T>
void upsample_backward(Shape in, int factor, Interp mode, const T* dy, T* dx) {
  const int h = in.h, w = in.w, oh = h * factor, ow = w * factor;
  const int planes = in.n * in.c;
  if (mode == Interp::kNearest) {
#pragma omp parallel for if (in.numel() * factor * factor > kParallelThreshold)
    for (int p = 0; p < planes; ++p) {
      T* dst = dx + static_cast<std::size_t>(p) * h * w;
      const T* src = dy + static_cast<std::size_t>(p) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        T* row = dst + (oy / factor) * w;
        for (int ox = 0; ox < ow; ++ox) row[ox / factor] += src[oy * ow + ox];
      }
    }
    return;
  }
  const auto ty = bilinear_taps<T>(h, factor);
  const auto tx = bilinear_taps<T>(w, factor);
#pragma omp parallel for if (in.numel() * factor * factor > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    T* dst = dx + static_cast<std::size_t>(p) * h * w;
    const T* src = dy + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      T* r0 = dst + ty.lo[oy] * w;
      T* r1 = dst + ty.hi[oy] * w;
      const T fy = ty.frac[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const T g = src[oy * ow + ox];
        const T fx = tx.frac[ox];
        r0[tx.lo[ox]] += g * (1 - fy) * (1 - fx);
        r0[tx.hi[ox]] += g * (1 - fy) * fx;
        r1[tx.lo[ox]] += g * fy * (1 - fx);
        r1[tx.hi[ox]] += g * fy * fx;
      }
    }
  }
}

template <typename T>
void batchnorm_forward_train(Shape s, const T* x, const T* gamma, const T* beta, T eps, T* mean,
                             T* var, T* invstd, T* y) {
  const std::size_t hw = s.plane();
  const T count = static_cast<T>(static_cast<std::size_t>(s.n) * hw);
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int ch = 0; ch < s.c; ++ch) {
    T sum = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* src = x + (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += src[i];
    }
    const T mu = sum / count;
    T sq = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* src = x + (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T d = src[i] - mu;
        sq += d * d;
      }
    }
    const T v = sq / count;
    const T is = T(1) / std::sqrt(v + eps);
    mean[ch] = mu;
    var[ch] = v;
    invstd[ch] = is;
    const T scale = gamma[ch] * is;
    const T shift = beta[ch] - mu * scale;
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
}

template <typename T>
void batchnorm_backward_train(Shape s, const T* x, const T* gamma, const T* mean,
                              const T* invstd, const T* dy, T* dx, T* dgamma, T* dbeta) {
  const std::size_t hw = s.plane();
  const T count = static_cast<T>(static_cast<std::size_t>(s.n) * hw);
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int ch = 0; ch < s.c; ++ch) {
    const T mu = mean[ch], is = invstd[ch];
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * (x[off + i] - mu) * is;
      }
    }
    if (dgamma) dgamma[ch] += sum_dy_xhat;
    if (dbeta) dbeta[ch] += sum_dy;
    if (!dx) continue;
    const T k = gamma[ch] * is / count;
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = (x[off + i] - mu) * is;
        dx[off + i] += k * (count * dy[off + i] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
}

template <typename T>
void batchnorm_forward_eval(Shape s, const T* x, const T* gamma, const T* beta,
                            const T* running_mean, const T* running_var, T eps, T* y) {
  const std::size_t hw = s.plane();
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int ch = 0; ch < s.c; ++ch) {
    const T scale = gamma[ch] / std::sqrt(running_var[ch] + eps);
    const T shift = beta[ch] - running_mean[ch] * scale;
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
}

template <typename T>
void batchnorm_backward_eval(Shape s, const T* x, const T* gamma, const T* running_mean,
                             const T* running_var, T eps, const T* dy, T* dx, T* dgamma,
                             T* dbeta) {
  const std::size_t hw = s.plane();
#pragma omp parallel for if (s.numel() > kParallelThreshold)
  for (int ch = 0; ch < s.c; ++ch) {
    const T is = T(1) / std::sqrt(running_var[ch] + eps);
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * (x[off + i] - running_mean[ch]) * is;
        if (dx) dx[off + i] += dy[off + i] * gamma[ch] * is;
      }
    }
    if (dgamma) dgamma[ch] += sum_dy_xhat;
    if (dbeta) dbeta[ch] += sum_dy;
  }
}

#define FSG_INSTANTIATE(T)                                                                     \
  template void max_pool_forward(const PoolGeometry&, const T*, T*, std::int32_t*);            \
  template void max_pool_backward(const PoolGeometry&, const T*, const std::int32_t*, T*);     \
  template void avg_pool_forward(const PoolGeometry&, const T*, T*);                           \
  template void avg_pool_backward(const PoolGeometry&, const T*, T*);                          \
  template void spatial_max(Shape, const T*, T*, std::int32_t*);                               \
  template void spatial_mean(Shape, const T*, T*);                                             \
  template void channel_max(Shape, const T*, T*, std::int32_t*);                               \
  template void channel_mean(Shape, const T*, T*);                                             \
  template void upsample_forward(Shape, int, Interp, const T*, T*);                            \
  template void upsample_backward(Shape, int, Interp, const T*, T*);                           \
  template void batchnorm_forward_train(Shape, const T*, const T*, const T*, T, T*, T*, T*,    \
                                        T*);                                                   \
  template void batchnorm_backward_train(Shape, const T*, const T*, const T*, const T*,        \
                                         const T*, T*, T*, T*);                                \
  template void batchnorm_forward_eval(Shape, const T*, const T*, const T*, const T*,          \
                                       const T*, T, T*);                                       \
  template void batchnorm_backward_eval(Shape, const T*, const T*, const T*, const T*, T,      \
                                        const T*, T*, T*, T*);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg::kernels
