#pragma once

// Binary (P5) PGM with maxval 255.

#include <string>

#include "fsg/tensor.hpp"

namespace fsg {

// Bytes scaled by 1/255 into a (1, 1, h, w) tensor. Throws DataError on a
// malformed header or short payload.
Tensor<float> read_pgm(const std::string& path);
Tensor<float> decode_pgm(const std::string& bytes, const std::string& what = "pgm");

// Values in [0, 1] (clamped) mapped to round-half-up(v * 255). The tensor
// must hold a single plane.
void write_pgm(const Tensor<float>& t, const std::string& path);
std::string encode_pgm(const Tensor<float>& t);

// Rounds to the nearest 8-bit level, i.e. decode(encode(t)).
Tensor<float> quantize8(const Tensor<float>& t);

}  // namespace fsg
