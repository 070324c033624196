#pragma once

#include <stdexcept>
#include <string>

namespace fsg {

// Incompatible tensor shapes or an invalid layer configuration.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf escaped a forward op, or an inverse FFT left a large
// imaginary residue.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing files: PGM images, manifests, checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fsg
