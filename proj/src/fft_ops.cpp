#include "fsg/fft.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fsg/errors.hpp"
#include "fsg/kernels.hpp"
#include "fsg/ops.hpp"
#include "fsg/tape.hpp"

namespace fsg {

namespace {

std::uint64_t fft_cost(const Shape& s) {
  const std::uint64_t hw = s.plane();
  std::uint64_t log2 = 0;
  while ((std::uint64_t{1} << log2) < hw) ++log2;
  return static_cast<std::uint64_t>(s.n) * s.c * 5 * hw * log2;
}

}  // namespace

template <typename T>
ComplexPair<T> fft2d(const Tensor<T>& x) {
  const Shape s = x.shape();
  ComplexPair<T> z{Tensor<T>(s), Tensor<T>(s)};
  kernels::fft2d_planes(s.n * s.c, s.h, s.w, x.data().data(), static_cast<const T*>(nullptr),
                        z.real.data().data(), z.imag.data().data(), false);
  FlopCounter::add_fft(fft_cost(s));
  if (detail::should_record(x)) {
    z.real.set_requires_grad(true);
    z.imag.set_requires_grad(true);
    Tape::active()->record("fft2d", [x, re = z.real, im = z.imag, s]() {
      if (!re.has_grad() && !im.has_grad()) return;
      // dx = Re(sum_k G_k e^{+i theta}) = h*w * Re(ifft(G)).
      const std::size_t count = s.numel();
      std::vector<T> back(count);
      kernels::fft2d_planes(s.n * s.c, s.h, s.w, re.grad().data(), im.grad().data(), back.data(),
                            static_cast<T*>(nullptr), true);
      const T hw = static_cast<T>(s.plane());
      auto dx = x.grad();
      for (std::size_t i = 0; i < count; ++i) dx[i] += back[i] * hw;
    });
  }
  check_finite(z.real, "fft2d");
  check_finite(z.imag, "fft2d");
  return z;
}

template <typename T>
Tensor<T> ifft2d(const ComplexPair<T>& z, ResidueCheck check) {
  const Shape s = z.real.shape();
  if (z.imag.shape() != s) {
    throw ShapeError("ifft2d: real " + s.str() + " and imaginary " + z.imag.shape().str() +
                     " planes differ");
  }
  Tensor<T> out(s);
  std::vector<T> imag_out(check == ResidueCheck::kStrict ? s.numel() : 0);
  kernels::fft2d_planes(s.n * s.c, s.h, s.w, z.real.data().data(), z.imag.data().data(),
                        out.data().data(), imag_out.empty() ? nullptr : imag_out.data(), true);
  FlopCounter::add_fft(fft_cost(s));
  if (check == ResidueCheck::kStrict) {
    T max_re = 1, max_im = 0;
    for (T v : out.data()) max_re = std::max(max_re, std::abs(v));
    for (T v : imag_out) max_im = std::max(max_im, std::abs(v));
    if (max_im > T(1e-3) * max_re) {
      throw NumericError("ifft2d: imaginary residue " + std::to_string(max_im) +
                         " exceeds tolerance; input is not a real signal's spectrum");
    }
  }
  if (detail::should_record(z.real, z.imag)) {
    out.set_requires_grad(true);
    Tape::active()->record("ifft2d", [re = z.real, im = z.imag, out, s]() {
      if (!out.has_grad()) return;
      // d/dZ of Re(ifft(Z)) is fft(g) / (h*w).
      const std::size_t count = s.numel();
      std::vector<T> gr(count), gi(count);
      kernels::fft2d_planes(s.n * s.c, s.h, s.w, out.grad().data(),
                            static_cast<const T*>(nullptr), gr.data(), gi.data(), false);
      const T inv = T(1) / static_cast<T>(s.plane());
      if (re.requires_grad()) {
        auto d = re.grad();
        for (std::size_t i = 0; i < count; ++i) d[i] += gr[i] * inv;
      }
      if (im.requires_grad()) {
        auto d = im.grad();
        for (std::size_t i = 0; i < count; ++i) d[i] += gi[i] * inv;
      }
    });
  }
  check_finite(out, "ifft2d");
  return out;
}

template <typename T>
T ifft2d_imag_residue(const ComplexPair<T>& z) {
  const Shape s = z.real.shape();
  std::vector<T> re(s.numel()), im(s.numel());
  kernels::fft2d_planes(s.n * s.c, s.h, s.w, z.real.data().data(), z.imag.data().data(),
                        re.data(), im.data(), true);
  T m = 0;
  for (T v : im) m = std::max(m, std::abs(v));
  return m;
}

template ComplexPair<float> fft2d(const Tensor<float>&);
template ComplexPair<double> fft2d(const Tensor<double>&);
template Tensor<float> ifft2d(const ComplexPair<float>&, ResidueCheck);
template Tensor<double> ifft2d(const ComplexPair<double>&, ResidueCheck);
template float ifft2d_imag_residue(const ComplexPair<float>&);
template double ifft2d_imag_residue(const ComplexPair<double>&);

}  // namespace fsg
