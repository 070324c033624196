#pragma once

#include "fsg/tensor.hpp"

namespace fsg {

// Unnormalized forward 2-D DFT of every (n, c) plane. h and w must be
// powers of two.
template <typename T>
ComplexPair<T> fft2d(const Tensor<T>& x);

enum class ResidueCheck {
  // Throw NumericError when the discarded imaginary part exceeds
  // 1e-3 * max(1, max|real|): the input was not the spectrum of a real
  // signal.
  kStrict,
  // Keep the real part unconditionally. Used after learned spectral
  // modulation, which does not preserve Hermitian symmetry.
  kRealPart,
};

// Inverse 2-D DFT scaled by 1/(h*w), returning the real part.
template <typename T>
Tensor<T> ifft2d(const ComplexPair<T>& z, ResidueCheck check = ResidueCheck::kStrict);

// Largest |imag| of the inverse transform of z.
template <typename T>
T ifft2d_imag_residue(const ComplexPair<T>& z);

}  // namespace fsg
