#pragma once

// FSGNet building blocks: pinwheel convolution (PConv), the
// multi-directional interactive attention block (MIAM), the multi-scale
// frequency-aware skip filter (MFM), the global pooling module (GPM) and
// the semantic guidance link (GSGF) that carries GPM output into the
// decoder.

#include <array>
#include <string>

#include "fsg/attention.hpp"
#include "fsg/layers.hpp"

namespace fsg {

// Four direction-biased convolutions (1x3 padded left / right, 3x1 padded
// top / bottom, each in_c -> in_c), concatenated and fused by a 2x2
// convolution padded right and bottom. Spatial size is preserved.
template <typename T>
struct PConvParams {
  using value_type = T;

  std::array<Conv2d<T>, 4> branches;  // left, right, up, down
  Conv2d<T> fuse;                     // 4 * in_c -> out_c, 2x2

  static PConvParams make(int in_c, int out_c, SplitMix64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);

  static constexpr std::array<PadQuad, 4> kBranchPads{
      PadQuad{2, 0, 0, 0}, PadQuad{0, 2, 0, 0}, PadQuad{0, 0, 2, 0}, PadQuad{0, 0, 0, 2}};
  static constexpr PadQuad kFusePad{0, 1, 0, 1};
};

template <typename T>
Tensor<T> pconv_forward(const Tensor<T>& x, const PConvParams<T>& p);

// Component switches matching the MIAM ablation rows. With use_pconv off
// each stage is a plain 3x3 convolution.
struct MiamFlags {
  bool use_pconv = true;
  bool use_residual = true;
  bool use_cam = true;
  bool use_sam = true;

  bool operator==(const MiamFlags&) const = default;
  // Two 3x3 conv stages with a residual and no attention: the block used
  // when MIAM is ablated away and in the decoder.
  static constexpr MiamFlags plain() { return {false, true, false, false}; }
};

// y = ReLU( CBAM(BN(S2(ReLU(BN(S1(x)))))) + shortcut(x) ), where S1, S2
// are PConv or 3x3 stages; shortcut is identity or a 1x1 conv+BN projection.
template <typename T>
struct MiamBlock {
  using value_type = T;

  MiamFlags flags;
  int in_c = 0;
  int out_c = 0;
  PConvParams<T> pconv1, pconv2;
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  SamParams<T> sam;
  CamParams<T> cam;
  Conv2d<T> shortcut;  // weight undefined when in_c == out_c
  BatchNorm2d<T> shortcut_bn;

  static MiamBlock make(int in_c, int out_c, MiamFlags flags, int cam_ratio, SplitMix64& rng,
                        T bn_momentum = T(0.1));
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  // Visits only the parameters the flags leave live.
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

struct MfmFlags {
  bool use_d3 = true;
  bool use_d5 = true;
  bool use_cam = true;
  bool use_fft = true;

  bool operator==(const MfmFlags&) const = default;
};

// expand (1x1, c -> 2c) -> split into X1 / X2 -> X5 = [DConv3(X1),
// DConv5(X1)] -> FFT -> 1x1 conv + BN + ReLU over [Re, Im] -> IFFT ->
// reduce (1x1 -> c) -> + X2 -> CAM.
template <typename T>
struct MfmBlock {
  using value_type = T;

  MfmFlags flags;
  int channels = 0;
  Conv2d<T> expand;
  Conv2d<T> dconv3, dconv5;
  Conv2d<T> freq;  // 2 * x5_channels -> 2 * x5_channels
  BatchNorm2d<T> freq_bn;
  Conv2d<T> reduce;
  CamParams<T> cam;

  static MfmBlock make(int channels, MfmFlags flags, int cam_ratio, SplitMix64& rng,
                       T bn_momentum = T(0.1));
  // Channel count of X5 under the current flags.
  int x5_channels() const;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct GpmOutput {
  Tensor<T> fused;    // same shape as the input
  Tensor<T> aux_map;  // (n, 1, h, w) logits
  Tensor<T> branches[3];
};

// Pyramid of average-pooled branches (rates 2, 4, 8) refined by 3x3 conv
// + CAM, each coarser branch also fed the 2x-pooled finer one; all are
// upsampled, concatenated with the input and fused by a 3x3 conv. A 1x1
// head turns the fused map into a single-channel auxiliary saliency map.
//
// When the input is smaller than a pooling rate, that pooling is clamped
// to the input extent (the branch degenerates to a global pool).
template <typename T>
struct GpmBlock {
  using value_type = T;

  int channels = 0;
  std::array<Conv2d<T>, 3> branch_conv;
  std::array<CamParams<T>, 3> branch_cam;
  Conv2d<T> fuse;      // 4c -> c, 3x3
  Conv2d<T> aux_head;  // c -> 1, 1x1

  static GpmBlock make(int channels, int cam_ratio, SplitMix64& rng);
  GpmOutput<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

// Projects the GPM feature to a decoder stage's width (1x1 conv+BN),
// upsamples it by `factor` and adds it to the decoder feature.
template <typename T>
struct GsgfLink {
  using value_type = T;

  Conv2d<T> project;  // gpm_c -> decoder_c, 1x1
  BatchNorm2d<T> project_bn;
  int factor = 2;

  static GsgfLink make(int gpm_c, int decoder_c, int factor, SplitMix64& rng,
                       T bn_momentum = T(0.1));
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
Tensor<T> gsgf_apply(const Tensor<T>& decoder_feat, const Tensor<T>& gpm_fused,
                     GsgfLink<T>& link, Mode mode);

}  // namespace fsg
