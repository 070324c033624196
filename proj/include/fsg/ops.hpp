#pragma once

// Differentiable tensor ops. Each op computes its forward result
// immediately and, when a TapeScope is open and any input requires grad,
// records a backward node on the active tape.

#include <cstdint>
#include <span>
#include <vector>

#include "fsg/kernels.hpp"
#include "fsg/tape.hpp"
#include "fsg/tensor.hpp"

namespace fsg {

enum class PoolMode { kMax, kAvg };
enum class Mode { kTrain, kEval };
using kernels::Interp;

// Dense cross-correlation. weight is (out_c, in_c, kh, kw); bias may be an
// undefined Tensor or hold out_c values.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, PadQuad pad = {});

// One k x k kernel per channel; weight is (c, 1, kh, kw).
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           PadQuad pad);

template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolMode mode, int kernel, int stride);

// Pool over the whole spatial plane: (n,c,h,w) -> (n,c,1,1).
template <typename T>
Tensor<T> global_pool(const Tensor<T>& x, PoolMode mode);

// Pool across channels at each pixel: (n,c,h,w) -> (n,1,h,w).
template <typename T>
Tensor<T> channel_pool(const Tensor<T>& x, PoolMode mode);

// factor must be 1, 2, 4, 8 or 16 (1 is the identity).
template <typename T>
Tensor<T> upsample2d(const Tensor<T>& x, int factor, Interp mode);

// Batch normalization over (n, h, w) per channel. running_mean and
// running_var hold c values; train mode updates them in place with
// `momentum` (unbiased variance), eval mode reads them.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                      T momentum = T(0.1), T eps = T(1e-5));

// Elementwise binary ops. Shapes must match per axis or be 1 on one side
// (broadcast), e.g. a (n,1,h,w) attention map against (n,c,h,w) features.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  return concat_channels(std::span<const Tensor<T>>(parts));
}
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count);
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, std::span<const int> sizes);

// Sum of all elements as a 1x1x1x1 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Tallies multiply-accumulates of conv2d and FFT calls made on this thread
// while in scope. Counting happens in eval and train mode alike.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t conv_macs() const { return conv_; }
  std::uint64_t fft_flops() const { return fft_; }
  std::uint64_t total() const { return conv_ + fft_; }

  static void add_conv(std::uint64_t v);
  static void add_fft(std::uint64_t v);

 private:
  std::uint64_t conv_ = 0;
  std::uint64_t fft_ = 0;
  FlopCounter* previous_;
};

}  // namespace fsg
