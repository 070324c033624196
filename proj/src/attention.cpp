#include "fsg/attention.hpp"

#include <cmath>

#include "fsg/errors.hpp"

namespace fsg {

template <typename T>
CamParams<T> CamParams<T>::make(int channels, int reduction, SplitMix64& rng) {
  if (channels <= 0 || reduction <= 0) throw ShapeError("CamParams: non-positive size");
  const int r = std::min(reduction, channels);
  if (channels % r != 0) {
    throw ShapeError("CamParams: " + std::to_string(channels) +
                     " channels not divisible by reduction " + std::to_string(r));
  }
  const int hidden = channels / r;
  CamParams p;
  p.reduction = r;
  const double b1 = std::sqrt(6.0 / channels);
  const double b2 = std::sqrt(6.0 / hidden);
  p.mlp_w1 = random_tensor<T>(Shape{hidden, channels, 1, 1}, rng, -b1, b1);
  p.mlp_w2 = random_tensor<T>(Shape{channels, hidden, 1, 1}, rng, -b2, b2);
  p.mlp_w1.set_requires_grad(true);
  p.mlp_w2.set_requires_grad(true);
  return p;
}

template <typename T>
void CamParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(join_name(prefix, "mlp_w1"), mlp_w1);
  v.param(join_name(prefix, "mlp_w2"), mlp_w2);
}

template <typename T>
SamParams<T> SamParams<T>::make(SplitMix64& rng) {
  SamParams p;
  const double bound = std::sqrt(6.0 / (2 * 49));
  p.conv7 = random_tensor<T>(Shape{1, 2, 7, 7}, rng, -bound, bound);
  p.bias = Tensor<T>(Shape{1, 1, 1, 1});
  p.conv7.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename T>
void SamParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(join_name(prefix, "conv7"), conv7);
  v.param(join_name(prefix, "bias"), bias);
}

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& f, const SamParams<T>& p) {
  const std::vector<Tensor<T>> pooled{channel_pool(f, PoolMode::kMax),
                                      channel_pool(f, PoolMode::kAvg)};
  const Tensor<T> logits = conv2d(concat_channels(pooled), p.conv7, p.bias, 1, PadQuad::same(3));
  return mul(f, sigmoid(logits));
}

namespace {

template <typename T>
Tensor<T> shared_mlp(const Tensor<T>& v, const CamParams<T>& p) {
  const Tensor<T> none;
  return conv2d(relu(conv2d(v, p.mlp_w1, none)), p.mlp_w2, none);
}

}  // namespace

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& f, const CamParams<T>& p) {
  if (f.c() != p.channels()) {
    throw ShapeError("channel_attention: input has " + std::to_string(f.c()) +
                     " channels, MLP expects " + std::to_string(p.channels()));
  }
  const Tensor<T> from_max = shared_mlp(global_pool(f, PoolMode::kMax), p);
  const Tensor<T> from_avg = shared_mlp(global_pool(f, PoolMode::kAvg), p);
  return mul(f, sigmoid(add(from_max, from_avg)));
}

template <typename T>
Tensor<T> cbam(const Tensor<T>& f, const SamParams<T>& sam, const CamParams<T>& cam) {
  return channel_attention(spatial_attention(f, sam), cam);
}

#define FSG_INSTANTIATE(T)                                                                    \
  template struct CamParams<T>;                                                               \
  template struct SamParams<T>;                                                               \
  template Tensor<T> spatial_attention(const Tensor<T>&, const SamParams<T>&);                \
  template Tensor<T> channel_attention(const Tensor<T>&, const CamParams<T>&);                \
  template Tensor<T> cbam(const Tensor<T>&, const SamParams<T>&, const CamParams<T>&);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg
