#include "fsg/layers.hpp"

#include <cmath>

#include "fsg/errors.hpp"

namespace fsg {

namespace {

template <typename T>
Tensor<T> kaiming_uniform(Shape s, int fan_in, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return random_tensor<T>(s, rng, -bound, bound);
}

}  // namespace

template <typename T>
Conv2d<T> Conv2d<T>::make(int in_c, int out_c, int kh, int kw, PadQuad pad, bool with_bias,
                          SplitMix64& rng, int stride) {
  if (in_c <= 0 || out_c <= 0 || kh <= 0 || kw <= 0) {
    throw ShapeError("Conv2d::make: non-positive extent");
  }
  Conv2d c;
  c.weight = kaiming_uniform<T>(Shape{out_c, in_c, kh, kw}, in_c * kh * kw, rng);
  c.weight.set_requires_grad(true);
  if (with_bias) {
    c.bias = Tensor<T>(Shape{1, out_c, 1, 1});
    c.bias.set_requires_grad(true);
  }
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
Conv2d<T> Conv2d<T>::make_depthwise(int channels, int k, bool with_bias, SplitMix64& rng) {
  Conv2d c;
  c.weight = kaiming_uniform<T>(Shape{channels, 1, k, k}, k * k, rng);
  c.weight.set_requires_grad(true);
  if (with_bias) {
    c.bias = Tensor<T>(Shape{1, channels, 1, 1});
    c.bias.set_requires_grad(true);
  }
  c.pad = PadQuad::same(k / 2);
  c.depthwise = true;
  return c;
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  if (depthwise) return depthwise_conv2d(x, weight, bias, pad);
  return conv2d(x, weight, bias, stride, pad);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(join_name(prefix, "weight"), weight);
  if (bias.defined()) v.param(join_name(prefix, "bias"), bias);
}

template <typename T>
BatchNorm2d<T> BatchNorm2d<T>::make(int channels, T momentum) {
  BatchNorm2d bn;
  const Shape s{1, channels, 1, 1};
  bn.gamma = Tensor<T>(s, T(1));
  bn.gamma.set_requires_grad(true);
  bn.beta = Tensor<T>(s, T(0));
  bn.beta.set_requires_grad(true);
  bn.running_mean = Tensor<T>(s, T(0));
  bn.running_var = Tensor<T>(s, T(1));
  bn.momentum = momentum;
  return bn;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, Mode mode) {
  return batchnorm2d(x, gamma, beta, running_mean, running_var, mode, momentum, eps);
}

template <typename T>
void BatchNorm2d<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(join_name(prefix, "gamma"), gamma);
  v.param(join_name(prefix, "beta"), beta);
  v.buffer(join_name(prefix, "running_mean"), running_mean);
  v.buffer(join_name(prefix, "running_var"), running_var);
}

template <typename T>
void fill(Tensor<T>& t, T value) {
  for (T& v : t.data()) v = value;
}

template <typename T>
void set_dirac(Tensor<T>& weight) {
  const Shape s = weight.shape();
  fill(weight, T(0));
  const bool depthwise = s.c == 1 && s.n > 1;
  for (int o = 0; o < s.n; ++o) {
    const int i = depthwise ? 0 : o;
    if (i >= s.c) continue;
    weight.at(o, i, s.h / 2, s.w / 2) = T(1);
  }
}

template <typename T>
Tensor<T> random_tensor(Shape s, SplitMix64& rng, double lo, double hi) {
  Tensor<T> t(s);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template void fill(Tensor<float>&, float);
template void fill(Tensor<double>&, double);
template void set_dirac(Tensor<float>&);
template void set_dirac(Tensor<double>&);
template Tensor<float> random_tensor(Shape, SplitMix64&, double, double);
template Tensor<double> random_tensor(Shape, SplitMix64&, double, double);

}  // namespace fsg
