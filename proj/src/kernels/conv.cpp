#include <cblas.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "fsg/errors.hpp"
#include "fsg/kernels.hpp"

namespace fsg::kernels {

void ConvGeometry::validate() const {
  if (input.c <= 0 || out_c <= 0 || kh <= 0 || kw <= 0 || stride <= 0) {
    throw ShapeError("conv2d: non-positive extent (in_c, out_c, kernel or stride)");
  }
  if (pad.left < 0 || pad.right < 0 || pad.top < 0 || pad.bottom < 0) {
    throw ShapeError("conv2d: negative padding");
  }
  if (groups != 1 && !(groups == input.c && out_c == input.c)) {
    throw ShapeError("conv2d: only dense or depthwise grouping is supported");
  }
  if (input.h + pad.top + pad.bottom < kh || input.w + pad.left + pad.right < kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + input.str());
  }
  if (out_h() < 1 || out_w() < 1) throw ShapeError("conv2d: non-positive output dimension");
}

namespace {

constexpr std::size_t kParallelThreshold = 1 << 14;

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c,
          int ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Valid output-column range [lo, hi) for kernel column kj, i.e. the ox with
// 0 <= ox*stride + kj - pad_left < w.
inline void valid_range(int kj, int pad_lo, int stride, int extent, int out_extent, int& lo,
                        int& hi) {
  const int offset = kj - pad_lo;
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = extent - offset <= 0 ? 0 : (extent - offset - 1) / stride + 1;
  hi = std::min(hi, out_extent);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const int c = g.input.c, h = g.input.h, w = g.input.w;
  const int oh = g.out_h(), ow = g.out_w();
  const int rows = c * g.kh * g.kw;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for if (static_cast<std::size_t>(rows) * plane > kParallelThreshold)
  for (int r = 0; r < rows; ++r) {
    const int ch = r / (g.kh * g.kw);
    const int ki = (r / g.kw) % g.kh;
    const int kj = r % g.kw;
    T* dst = col + r * plane;
    const T* src = x + static_cast<std::size_t>(ch) * h * w;
    int x_lo, x_hi;
    valid_range(kj, g.pad.left, g.stride, w, ow, x_lo, x_hi);
    for (int oy = 0; oy < oh; ++oy) {
      T* row = dst + static_cast<std::size_t>(oy) * ow;
      const int iy = oy * g.stride + ki - g.pad.top;
      if (iy < 0 || iy >= h) {
        std::fill(row, row + ow, T(0));
        continue;
      }
      std::fill(row, row + x_lo, T(0));
      const T* in_row = src + static_cast<std::size_t>(iy) * w + (kj - g.pad.left);
      if (g.stride == 1) {
        std::copy(in_row + x_lo, in_row + x_hi, row + x_lo);
      } else {
        for (int ox = x_lo; ox < x_hi; ++ox) row[ox] = in_row[ox * g.stride];
      }
      std::fill(row + x_hi, row + ow, T(0));
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const int c = g.input.c, h = g.input.h, w = g.input.w;
  const int oh = g.out_h(), ow = g.out_w();
  const int per_ch = g.kh * g.kw;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for if (static_cast<std::size_t>(c) * per_ch * plane > kParallelThreshold)
  for (int ch = 0; ch < c; ++ch) {
    T* dst = dx + static_cast<std::size_t>(ch) * h * w;
    for (int k = 0; k < per_ch; ++k) {
      const int ki = k / g.kw, kj = k % g.kw;
      const T* src = col + (static_cast<std::size_t>(ch) * per_ch + k) * plane;
      int x_lo, x_hi;
      valid_range(kj, g.pad.left, g.stride, w, ow, x_lo, x_hi);
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * g.stride + ki - g.pad.top;
        if (iy < 0 || iy >= h) continue;
        const T* row = src + static_cast<std::size_t>(oy) * ow;
        T* out_row = dst + static_cast<std::size_t>(iy) * w + (kj - g.pad.left);
        for (int ox = x_lo; ox < x_hi; ++ox) out_row[ox * g.stride] += row[ox];
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == PadQuad{};
}

template <typename T>
void depthwise_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
  const int c = g.input.c, h = g.input.h, w = g.input.w;
  const int oh = g.out_h(), ow = g.out_w();
  const int planes = g.input.n * c;
#pragma omp parallel for if (g.macs() > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const int ch = p % c;
    const T* src = x + static_cast<std::size_t>(p) * h * w;
    const T* k = weight + static_cast<std::size_t>(ch) * g.kh * g.kw;
    T* dst = y + static_cast<std::size_t>(p) * oh * ow;
    std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, bias ? bias[ch] : T(0));
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T kv = k[ki * g.kw + kj];
        int x_lo, x_hi;
        valid_range(kj, g.pad.left, g.stride, w, ow, x_lo, x_hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ki - g.pad.top;
          if (iy < 0 || iy >= h) continue;
          const T* in_row = src + static_cast<std::size_t>(iy) * w + (kj - g.pad.left);
          T* out_row = dst + static_cast<std::size_t>(oy) * ow;
          for (int ox = x_lo; ox < x_hi; ++ox) out_row[ox] += kv * in_row[ox * g.stride];
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const ConvGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                        T* dweight, T* dbias) {
  const int n = g.input.n, c = g.input.c, h = g.input.h, w = g.input.w;
  const int oh = g.out_h(), ow = g.out_w();
  // Parallel over channels; each thread owns one channel's weights, bias
  // and input-gradient planes.
#pragma omp parallel for if (g.macs() > kParallelThreshold)
  for (int ch = 0; ch < c; ++ch) {
    const T* k = weight + static_cast<std::size_t>(ch) * g.kh * g.kw;
    for (int b = 0; b < n; ++b) {
      const std::size_t p = static_cast<std::size_t>(b) * c + ch;
      const T* src = x + p * h * w;
      const T* gy = dy + p * oh * ow;
      if (dbias) {
        T s = 0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) s += gy[i];
        dbias[ch] += s;
      }
      for (int ki = 0; ki < g.kh; ++ki) {
        for (int kj = 0; kj < g.kw; ++kj) {
          int x_lo, x_hi;
          valid_range(kj, g.pad.left, g.stride, w, ow, x_lo, x_hi);
          const T kv = k[ki * g.kw + kj];
          T acc = 0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride + ki - g.pad.top;
            if (iy < 0 || iy >= h) continue;
            const std::size_t in_off = static_cast<std::size_t>(iy) * w + (kj - g.pad.left);
            const T* g_row = gy + static_cast<std::size_t>(oy) * ow;
            const T* in_row = src + in_off;
            for (int ox = x_lo; ox < x_hi; ++ox) acc += g_row[ox] * in_row[ox * g.stride];
            if (dx) {
              T* dx_row = dx + p * h * w + in_off;
              for (int ox = x_lo; ox < x_hi; ++ox) dx_row[ox * g.stride] += kv * g_row[ox];
            }
          }
          if (dweight) dweight[static_cast<std::size_t>(ch) * g.kh * g.kw + ki * g.kw + kj] += acc;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
  g.validate();
  if (g.groups != 1) {
    depthwise_forward(g, x, weight, bias, y);
    return;
  }
  const int m = g.out_c;
  const int k = g.input.c * g.kh * g.kw;
  const int n_cols = g.out_h() * g.out_w();
  const std::size_t in_stride = static_cast<std::size_t>(g.input.c) * g.input.h * g.input.w;
  const std::size_t out_stride = static_cast<std::size_t>(m) * n_cols;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * n_cols);
  for (int b = 0; b < g.input.n; ++b) {
    const T* xb = x + b * in_stride;
    T* yb = y + b * out_stride;
    const T* cols = xb;
    if (!pointwise) {
      im2col(g, xb, col.data());
      cols = col.data();
    }
    gemm(CblasNoTrans, CblasNoTrans, m, n_cols, k, T(1), weight, k, cols, n_cols, T(0), yb,
         n_cols);
    if (bias) {
      for (int o = 0; o < m; ++o) {
        T* row = yb + static_cast<std::size_t>(o) * n_cols;
        const T bv = bias[o];
        for (int i = 0; i < n_cols; ++i) row[i] += bv;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias) {
  g.validate();
  if (g.groups != 1) {
    depthwise_backward(g, x, weight, dy, dx, dweight, dbias);
    return;
  }
  const int m = g.out_c;
  const int k = g.input.c * g.kh * g.kw;
  const int n_cols = g.out_h() * g.out_w();
  const std::size_t in_stride = static_cast<std::size_t>(g.input.c) * g.input.h * g.input.w;
  const std::size_t out_stride = static_cast<std::size_t>(m) * n_cols;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * n_cols);
  std::vector<T> dcol(pointwise || !dx ? 0 : static_cast<std::size_t>(k) * n_cols);
  for (int b = 0; b < g.input.n; ++b) {
    const T* xb = x + b * in_stride;
    const T* gy = dy + b * out_stride;
    if (dbias) {
      for (int o = 0; o < m; ++o) {
        const T* row = gy + static_cast<std::size_t>(o) * n_cols;
        T s = 0;
        for (int i = 0; i < n_cols; ++i) s += row[i];
        dbias[o] += s;
      }
    }
    if (dweight) {
      const T* cols = xb;
      if (!pointwise) {
        im2col(g, xb, col.data());
        cols = col.data();
      }
      gemm(CblasNoTrans, CblasTrans, m, k, n_cols, T(1), gy, n_cols, cols, n_cols, T(1),
           dweight, k);
    }
    if (dx) {
      T* dxb = dx + b * in_stride;
      if (pointwise) {
        gemm(CblasTrans, CblasNoTrans, k, n_cols, m, T(1), weight, k, gy, n_cols, T(1), dxb,
             n_cols);
      } else {
        gemm(CblasTrans, CblasNoTrans, k, n_cols, m, T(1), weight, k, gy, n_cols, T(0),
             dcol.data(), n_cols);
        col2im(g, dcol.data(), dxb);
      }
    }
  }
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

template void conv2d_forward(const ConvGeometry&, const float*, const float*, const float*,
                             float*);
template void conv2d_forward(const ConvGeometry&, const double*, const double*, const double*,
                             double*);
template void conv2d_backward(const ConvGeometry&, const float*, const float*, const float*,
                              float*, float*, float*);
template void conv2d_backward(const ConvGeometry&, const double*, const double*, const double*,
                              double*, double*, double*);

}  // namespace fsg::kernels
