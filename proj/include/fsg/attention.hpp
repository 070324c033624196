#pragma once

// Spatial (SAM), channel (CAM) and combined (CBAM) attention.

#include <string>

#include "fsg/layers.hpp"

namespace fsg {

// Shared two-layer MLP applied to the global max- and average-pooled
// channel vectors. Both layers are bias-free 1x1 convolutions with a ReLU
// between them.
template <typename T>
struct CamParams {
  using value_type = T;

  Tensor<T> mlp_w1;  // (c / r, c, 1, 1)
  Tensor<T> mlp_w2;  // (c, c / r, 1, 1)
  int reduction = 4;

  // r is clamped to c when c < r; otherwise c must be divisible by r.
  static CamParams make(int channels, int reduction, SplitMix64& rng);
  int channels() const { return mlp_w1.c(); }
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct SamParams {
  using value_type = T;

  Tensor<T> conv7;  // (1, 2, 7, 7), input = [channel max, channel mean]
  Tensor<T> bias;   // 1 value

  static SamParams make(SplitMix64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

// f * sigmoid(conv7x7([max_c f, mean_c f])), attention broadcast over
// channels.
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& f, const SamParams<T>& p);

// f * sigmoid(MLP(maxpool f) + MLP(avgpool f)), attention broadcast over
// the spatial plane.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& f, const CamParams<T>& p);

// Spatial first, then channel.
template <typename T>
Tensor<T> cbam(const Tensor<T>& f, const SamParams<T>& sam, const CamParams<T>& cam);

}  // namespace fsg
