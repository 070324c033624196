#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fsg/errors.hpp"
#include "fsg/kernels.hpp"

namespace fsg::kernels {

namespace {

template <typename T>
struct Radix2Plan {
  int n = 0;
  std::vector<int> bitrev;
  std::vector<std::complex<T>> twiddle;  // exp(-2*pi*i*k/n), k < n/2

  explicit Radix2Plan(int size) : n(size), bitrev(size), twiddle(size / 2) {
    int bits = 0;
    while ((1 << bits) < n) ++bits;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev[i] = r;
    }
    for (int k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * k / n;
      twiddle[k] = {static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle))};
    }
  }

  // In place over n elements spaced `stride` apart.
  void run(std::complex<T>* data, std::size_t stride, bool inverse,
           std::vector<std::complex<T>>& scratch) const {
    scratch.resize(n);
    for (int i = 0; i < n; ++i) scratch[bitrev[i]] = data[i * stride];
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len / 2;
      const int step = n / len;
      for (int start = 0; start < n; start += len) {
        for (int k = 0; k < half; ++k) {
          // Spelled out: std::complex operator* goes through the
          // Annex G NaN-recovery path, several times slower.
          const T wr = twiddle[k * step].real();
          const T wi = inverse ? -twiddle[k * step].imag() : twiddle[k * step].imag();
          const std::complex<T> a = scratch[start + k];
          const std::complex<T> v = scratch[start + k + half];
          const std::complex<T> b{v.real() * wr - v.imag() * wi, v.real() * wi + v.imag() * wr};
          scratch[start + k] = a + b;
          scratch[start + k + half] = a - b;
        }
      }
    }
    for (int i = 0; i < n; ++i) data[i * stride] = scratch[i];
  }
};

}  // namespace

template <typename T>
void fft2d_planes(int planes, int h, int w, const T* re_in, const T* im_in, T* re_out,
                  T* im_out, bool inverse) {
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ShapeError("fft2d: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not a power of two");
  }
  const Radix2Plan<T> rows(w);
  const Radix2Plan<T> cols(h);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const T scale = inverse ? T(1) / static_cast<T>(hw) : T(1);
#pragma omp parallel
  {
    std::vector<std::complex<T>> buf(hw);
    std::vector<std::complex<T>> scratch;
#pragma omp for
    for (int p = 0; p < planes; ++p) {
      const std::size_t off = static_cast<std::size_t>(p) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        buf[i] = {re_in[off + i], im_in ? im_in[off + i] : T(0)};
      }
      for (int r = 0; r < h; ++r) rows.run(buf.data() + static_cast<std::size_t>(r) * w, 1, inverse, scratch);
      for (int c = 0; c < w; ++c) cols.run(buf.data() + c, w, inverse, scratch);
      for (std::size_t i = 0; i < hw; ++i) {
        re_out[off + i] = buf[i].real() * scale;
        if (im_out) im_out[off + i] = buf[i].imag() * scale;
      }
    }
  }
}

template void fft2d_planes(int, int, int, const float*, const float*, float*, float*, bool);
template void fft2d_planes(int, int, int, const double*, const double*, double*, double*, bool);

}  // namespace fsg::kernels
