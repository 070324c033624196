#include "fsg/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "fsg/errors.hpp"

namespace fsg {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
  impl_->shape = shape;
  impl_->data.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor " + shape.str() + " given " + std::to_string(values.size()) +
                     " values");
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + impl_->shape.str());
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor<T>(impl_->shape, impl_->data);
}

namespace {
std::atomic<bool> g_finite_checks{true};
}

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }

template <typename T>
void check_finite(const Tensor<T>& t, const char* where) {
  if (!g_finite_checks) return;
  for (T v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + where);
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite(const Tensor<float>&, const char*);
template void check_finite(const Tensor<double>&, const char*);

}  // namespace fsg
