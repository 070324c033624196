#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fsg {

// (batch, channel, height, width) extents of a rank-4 tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  constexpr bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Zero-padding amounts on each side of a spatial plane.
struct PadQuad {
  int left = 0;
  int right = 0;
  int top = 0;
  int bottom = 0;

  static constexpr PadQuad same(int p) { return {p, p, p, p}; }
  constexpr bool operator==(const PadQuad&) const = default;
};

// Dense NCHW tensor with an optional gradient buffer.
//
// A Tensor is a reference-counted handle: copies alias the same storage,
// which is what lets the tape accumulate gradients into parameters that
// were captured by value. Use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int n() const { return impl_->shape.n; }
  int c() const { return impl_->shape.c; }
  int h() const { return impl_->shape.h; }
  int w() const { return impl_->shape.w; }
  std::size_t size() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::vector<T>& storage() { return impl_->data; }

  // Gradient buffer, allocated as zeros on first access. Writable through
  // const handles: gradients are tape bookkeeping, not part of the value.
  std::span<T> grad() const;
  bool has_grad() const { return defined() && !impl_->grad.empty(); }
  void zero_grad() const { impl_->grad.clear(); }

  bool requires_grad() const { return defined() && impl_->requires_grad; }
  const Tensor& set_requires_grad(bool on) const {
    impl_->requires_grad = on;
    return *this;
  }

  T& at(int n, int c, int h, int w) { return impl_->data[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return impl_->data[offset(n, c, h, w)]; }
  T item() const;

  // Deep copy of the values; the copy carries no gradient.
  Tensor clone() const;
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }

  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Real and imaginary planes of a 2-D spectrum.
template <typename T>
struct ComplexPair {
  Tensor<T> real;
  Tensor<T> imag;
};

// Throws NumericError if any value is NaN or Inf. Ops call this on their
// outputs unless disabled with set_finite_checks(false).
template <typename T>
void check_finite(const Tensor<T>& t, const char* where);
void set_finite_checks(bool on);
bool finite_checks_enabled();

}  // namespace fsg
