#pragma once

// The full encoder / decoder network:
//
//   E0..E3   MIAM blocks, 2x2 max pool between stages
//   B        MIAM block at H/16, then GPM (fused feature + aux head)
//   S0..S3   MFM filters on the skip connections
//   D3..D0   bilinear x2 -> 3x3 conv -> concat skip -> residual block
//            -> optional GSGF injection of the GPM feature
//   head     1x1 conv -> sigmoid

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsg/blocks.hpp"
#include "json.hpp"

namespace fsg {

struct FsgnetConfig {
  int input_hw = 64;
  std::array<int, 5> stage_channels{8, 16, 32, 64, 128};
  bool use_miam = true;
  bool use_mfm = true;
  bool use_gpm = true;
  int gsgf_count = 4;  // links at decoder upsample factors 2, 4, 8, 16 (first k)
  MiamFlags miam;
  MfmFlags mfm;
  double bn_momentum = 0.1;
  int cam_ratio = 4;
  int depth = 1;  // MIAM blocks per encoder stage

  // Throws ShapeError describing the first violated invariant.
  void validate() const;
  bool operator==(const FsgnetConfig&) const = default;
};

void to_json(nlohmann::json& j, const FsgnetConfig& c);
void from_json(const nlohmann::json& j, FsgnetConfig& c);

// Activations exposed for feature-map export.
template <typename T>
using FeatureTaps = std::map<std::string, Tensor<T>>;

// Valid tap names, in network order.
std::vector<std::string> tap_names();

template <typename T>
struct FsgnetOutput {
  Tensor<T> o_final;  // (n, 1, H, W), in (0, 1)
  Tensor<T> aux;      // same shape; undefined when GPM is off
};

template <typename T>
struct Fsgnet {
  using value_type = T;

  FsgnetConfig cfg;
  std::array<std::vector<MiamBlock<T>>, 4> encoder;
  std::vector<MiamBlock<T>> bottleneck;
  std::optional<GpmBlock<T>> gpm;
  Conv2d<T> plain_bottleneck;  // conv+BN+ReLU, replaces GPM when it is off
  BatchNorm2d<T> plain_bottleneck_bn;
  std::array<std::optional<MfmBlock<T>>, 4> skip;
  std::array<Conv2d<T>, 4> up_conv;  // c[k+1] -> c[k], conv+BN+ReLU
  std::array<BatchNorm2d<T>, 4> up_bn;
  std::array<MiamBlock<T>, 4> decoder;
  std::array<std::optional<GsgfLink<T>>, 4> gsgf;  // indexed by decoder level
  Conv2d<T> head;

  FsgnetOutput<T> forward(const Tensor<T>& x, Mode mode, FeatureTaps<T>* taps = nullptr);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
Fsgnet<T> build_network(const FsgnetConfig& cfg, std::uint64_t seed);

struct Complexity {
  std::uint64_t params = 0;
  std::uint64_t conv_macs = 0;
  std::uint64_t fft_flops = 0;
  std::uint64_t flops() const { return conv_macs + fft_flops; }
};

// Exact learnable scalar count, plus conv MACs and FFT flops of one
// single-image forward at the configured resolution.
template <typename T>
Complexity count_params_flops(Fsgnet<T>& net);

// Learnable scalar count of any module with visit().
template <typename Module>
std::uint64_t count_params(Module& m) {
  std::uint64_t n = 0;
  for (const auto& p : collect(m).params) n += p.tensor.size();
  return n;
}

}  // namespace fsg
