#pragma once

// Raw compute kernels over NCHW buffers, with no autodiff bookkeeping.
//
// Each kernel family comes in two flavours: the production version
// (OpenMP-parallel over batch/channel planes, im2col + BLAS GEMM for dense
// convolution) and a serial `_reference` version written as plain nested
// loops. The reference versions exist for tests and kernel_bench only.
// Backward kernels accumulate into their outputs (+=); pass nullptr to
// skip a gradient.

#include <cstddef>
#include <cstdint>

#include "fsg/tensor.hpp"

namespace fsg::kernels {

struct ConvGeometry {
  Shape input;
  int out_c = 0;
  int kh = 0;
  int kw = 0;
  int stride = 1;
  PadQuad pad;
  // 1 (dense) or input.c (depthwise, out_c == input.c).
  int groups = 1;

  int out_h() const { return (input.h + pad.top + pad.bottom - kh) / stride + 1; }
  int out_w() const { return (input.w + pad.left + pad.right - kw) / stride + 1; }
  Shape output() const { return {input.n, out_c, out_h(), out_w()}; }
  int in_per_group() const { return input.c / groups; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_c) * in_per_group() * kh * kw;
  }
  // Multiply-accumulates for the whole batch.
  std::size_t macs() const {
    return static_cast<std::size_t>(input.n) * out_c * in_per_group() * kh * kw * out_h() *
           out_w();
  }
  // Throws ShapeError on an impossible configuration.
  void validate() const;
};

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias);

template <typename T>
void conv2d_forward_reference(const ConvGeometry& g, const T* x, const T* weight,
                              const T* bias, T* y);
template <typename T>
void conv2d_backward_reference(const ConvGeometry& g, const T* x, const T* weight,
                               const T* dy, T* dx, T* dweight, T* dbias);

struct PoolGeometry {
  Shape input;
  int kernel = 2;
  int stride = 2;

  int out_h() const { return (input.h - kernel) / stride + 1; }
  int out_w() const { return (input.w - kernel) / stride + 1; }
  Shape output() const { return {input.n, input.c, out_h(), out_w()}; }
  void validate() const;
};

// argmax receives, per output element, the flat in-plane index of the
// winning input pixel (first maximum in row-major order).
template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, std::int32_t* argmax);
template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* dy, const std::int32_t* argmax, T* dx);
template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y);
template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* dy, T* dx);

template <typename T>
void max_pool_forward_reference(const PoolGeometry& g, const T* x, T* y);
template <typename T>
void avg_pool_forward_reference(const PoolGeometry& g, const T* x, T* y);

// Reductions over the spatial plane (n,c,h,w -> n,c,1,1) and over the
// channel axis (n,c,h,w -> n,1,h,w). Max variants record argmax indices
// (in-plane index, resp. channel index).
template <typename T>
void spatial_max(Shape s, const T* x, T* y, std::int32_t* argmax);
template <typename T>
void spatial_mean(Shape s, const T* x, T* y);
template <typename T>
void channel_max(Shape s, const T* x, T* y, std::int32_t* argmax);
template <typename T>
void channel_mean(Shape s, const T* x, T* y);

enum class Interp { kNearest, kBilinear };

// Integer-factor upsampling. Bilinear uses half-pixel centres
// (align_corners = false) with edge clamping.
template <typename T>
void upsample_forward(Shape in, int factor, Interp mode, const T* x, T* y);
template <typename T>
void upsample_backward(Shape in, int factor, Interp mode, const T* dy, T* dx);
template <typename T>
void upsample_forward_reference(Shape in, int factor, Interp mode, const T* x, T* y);

// Training-mode batch norm. mean/invstd receive the per-channel batch
// statistics used for normalization (biased variance).
template <typename T>
void batchnorm_forward_train(Shape s, const T* x, const T* gamma, const T* beta, T eps,
                             T* mean, T* var, T* invstd, T* y);
template <typename T>
void batchnorm_backward_train(Shape s, const T* x, const T* gamma, const T* mean,
                              const T* invstd, const T* dy, T* dx, T* dgamma, T* dbeta);
template <typename T>
void batchnorm_forward_eval(Shape s, const T* x, const T* gamma, const T* beta,
                            const T* running_mean, const T* running_var, T eps, T* y);
template <typename T>
void batchnorm_backward_eval(Shape s, const T* x, const T* gamma, const T* running_mean,
                             const T* running_var, T eps, const T* dy, T* dx, T* dgamma,
                             T* dbeta);

// 2-D radix-2 FFT over `planes` contiguous h*w planes (h, w powers of two).
// forward: unnormalized; inverse: scaled by 1/(h*w). Inputs may be real
// only (im_in == nullptr); outputs may drop the imaginary part
// (im_out == nullptr).
template <typename T>
void fft2d_planes(int planes, int h, int w, const T* re_in, const T* im_in, T* re_out,
                  T* im_out, bool inverse);

bool is_power_of_two(int v);

}  // namespace fsg::kernels
