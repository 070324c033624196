#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsg/ops.hpp"
#include "fsg/rng.hpp"
#include "fsg/tensor.hpp"

namespace fsg {

// Walks the learnable parameters and persistent buffers (batch-norm
// running statistics) of a module tree, with dotted names.
template <typename T>
class ParamVisitor {
 public:
  virtual ~ParamVisitor() = default;
  virtual void param(const std::string& name, Tensor<T>& t) = 0;
  virtual void buffer(const std::string& name, Tensor<T>& t) = 0;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Flattens a module's visit() into lists.
template <typename T>
class ParamCollector : public ParamVisitor<T> {
 public:
  void param(const std::string& name, Tensor<T>& t) override { params.push_back({name, t}); }
  void buffer(const std::string& name, Tensor<T>& t) override { buffers.push_back({name, t}); }

  std::vector<Tensor<T>> param_tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
  }

  std::vector<NamedTensor<T>> params;
  std::vector<NamedTensor<T>> buffers;
};

template <typename Module>
auto collect(Module& m) {
  using T = typename Module::value_type;
  ParamCollector<T> c;
  m.visit("", c);
  return c;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
struct Conv2d {
  using value_type = T;

  Tensor<T> weight;  // (out_c, in_c, kh, kw); (c, 1, kh, kw) when depthwise
  Tensor<T> bias;    // out_c values, or undefined
  int stride = 1;
  PadQuad pad;
  bool depthwise = false;

  // Kaiming-uniform over fan-in (bound sqrt(6 / fan_in)); zero bias.
  static Conv2d make(int in_c, int out_c, int kh, int kw, PadQuad pad, bool with_bias,
                     SplitMix64& rng, int stride = 1);
  static Conv2d make_depthwise(int channels, int k, bool with_bias, SplitMix64& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& v);

  int in_channels() const { return depthwise ? weight.n() : weight.c(); }
  int out_channels() const { return weight.n(); }
};

template <typename T>
struct BatchNorm2d {
  using value_type = T;

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BatchNorm2d make(int channels, T momentum = T(0.1));
  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

// In-place initializers, mostly for tests and hand-traced examples.
template <typename T>
void fill(Tensor<T>& t, T value);
// Sets a (out_c, in_c, k, k) or depthwise (c, 1, k, k) kernel to the
// identity map: 1 at the centre tap of channel o -> o, zero elsewhere.
template <typename T>
void set_dirac(Tensor<T>& weight);
template <typename T>
Tensor<T> random_tensor(Shape s, SplitMix64& rng, double lo = -1.0, double hi = 1.0);

}  // namespace fsg
