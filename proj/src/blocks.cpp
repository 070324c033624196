#include "fsg/blocks.hpp"

#include <algorithm>

#include "fsg/errors.hpp"
#include "fsg/fft.hpp"

namespace fsg {

template <typename T>
PConvParams<T> PConvParams<T>::make(int in_c, int out_c, SplitMix64& rng) {
  PConvParams p;
  for (int b = 0; b < 4; ++b) {
    const bool horizontal = b < 2;
    p.branches[b] = Conv2d<T>::make(in_c, in_c, horizontal ? 1 : 3, horizontal ? 3 : 1,
                                    kBranchPads[b], false, rng);
  }
  p.fuse = Conv2d<T>::make(4 * in_c, out_c, 2, 2, kFusePad, false, rng);
  return p;
}

template <typename T>
void PConvParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  static const char* names[4] = {"left", "right", "up", "down"};
  for (int b = 0; b < 4; ++b) branches[b].visit(join_name(prefix, names[b]), v);
  fuse.visit(join_name(prefix, "fuse"), v);
}

template <typename T>
Tensor<T> pconv_forward(const Tensor<T>& x, const PConvParams<T>& p) {
  if (x.c() != p.branches[0].in_channels()) {
    throw ShapeError("pconv_forward: input has " + std::to_string(x.c()) +
                     " channels, expected " + std::to_string(p.branches[0].in_channels()));
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(4);
  for (const auto& b : p.branches) parts.push_back(b(x));
  return p.fuse(concat_channels(parts));
}

template <typename T>
MiamBlock<T> MiamBlock<T>::make(int in_c, int out_c, MiamFlags flags, int cam_ratio,
                                SplitMix64& rng, T bn_momentum) {
  MiamBlock b;
  b.flags = flags;
  b.in_c = in_c;
  b.out_c = out_c;
  // Everything is allocated regardless of flags so that the rng stream, and
  // therefore the initialization of the live parameters, does not depend on
  // which components are switched off.
  b.pconv1 = PConvParams<T>::make(in_c, out_c, rng);
  b.pconv2 = PConvParams<T>::make(out_c, out_c, rng);
  b.conv1 = Conv2d<T>::make(in_c, out_c, 3, 3, PadQuad::same(1), false, rng);
  b.conv2 = Conv2d<T>::make(out_c, out_c, 3, 3, PadQuad::same(1), false, rng);
  b.bn1 = BatchNorm2d<T>::make(out_c, bn_momentum);
  b.bn2 = BatchNorm2d<T>::make(out_c, bn_momentum);
  b.sam = SamParams<T>::make(rng);
  b.cam = CamParams<T>::make(out_c, cam_ratio, rng);
  if (in_c != out_c) {
    b.shortcut = Conv2d<T>::make(in_c, out_c, 1, 1, {}, false, rng);
    b.shortcut_bn = BatchNorm2d<T>::make(out_c, bn_momentum);
  }
  return b;
}

template <typename T>
Tensor<T> MiamBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  const auto stage1 = [&](const Tensor<T>& t) {
    return flags.use_pconv ? pconv_forward(t, pconv1) : conv1(t);
  };
  const auto stage2 = [&](const Tensor<T>& t) {
    return flags.use_pconv ? pconv_forward(t, pconv2) : conv2(t);
  };
  Tensor<T> h = relu(bn1(stage1(x), mode));
  h = bn2(stage2(h), mode);
  if (flags.use_sam) h = spatial_attention(h, sam);
  if (flags.use_cam) h = channel_attention(h, cam);
  if (flags.use_residual) h = add(h, shortcut.weight.defined() ? shortcut_bn(shortcut(x), mode) : x);
  return relu(h);
}

template <typename T>
void MiamBlock<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  if (flags.use_pconv) {
    pconv1.visit(join_name(prefix, "pconv1"), v);
    pconv2.visit(join_name(prefix, "pconv2"), v);
  } else {
    conv1.visit(join_name(prefix, "conv1"), v);
    conv2.visit(join_name(prefix, "conv2"), v);
  }
  bn1.visit(join_name(prefix, "bn1"), v);
  bn2.visit(join_name(prefix, "bn2"), v);
  if (flags.use_sam) sam.visit(join_name(prefix, "sam"), v);
  if (flags.use_cam) cam.visit(join_name(prefix, "cam"), v);
  if (flags.use_residual && shortcut.weight.defined()) {
    shortcut.visit(join_name(prefix, "shortcut"), v);
    shortcut_bn.visit(join_name(prefix, "shortcut_bn"), v);
  }
}

template <typename T>
int MfmBlock<T>::x5_channels() const {
  const int branches = (flags.use_d3 ? 1 : 0) + (flags.use_d5 ? 1 : 0);
  return std::max(branches, 1) * channels;
}

template <typename T>
MfmBlock<T> MfmBlock<T>::make(int channels, MfmFlags flags, int cam_ratio, SplitMix64& rng,
                              T bn_momentum) {
  MfmBlock b;
  b.flags = flags;
  b.channels = channels;
  const int x5 = b.x5_channels();
  b.expand = Conv2d<T>::make(channels, 2 * channels, 1, 1, {}, true, rng);
  b.dconv3 = Conv2d<T>::make_depthwise(channels, 3, true, rng);
  b.dconv5 = Conv2d<T>::make_depthwise(channels, 5, true, rng);
  b.freq = Conv2d<T>::make(2 * x5, 2 * x5, 1, 1, {}, true, rng);
  b.freq_bn = BatchNorm2d<T>::make(2 * x5, bn_momentum);
  b.reduce = Conv2d<T>::make(x5, channels, 1, 1, {}, true, rng);
  b.cam = CamParams<T>::make(channels, cam_ratio, rng);
  return b;
}

template <typename T>
Tensor<T> MfmBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != channels) {
    throw ShapeError("mfm_forward: input has " + std::to_string(x.c()) + " channels, expected " +
                     std::to_string(channels));
  }
  const int halves[2] = {channels, channels};
  const std::vector<Tensor<T>> xs = split_channels(expand(x), std::span<const int>(halves));
  const Tensor<T>& x1 = xs[0];
  const Tensor<T>& x2 = xs[1];

  std::vector<Tensor<T>> scales;
  if (flags.use_d3) scales.push_back(dconv3(x1));
  if (flags.use_d5) scales.push_back(dconv5(x1));
  Tensor<T> x5 = scales.empty() ? x1 : scales.size() == 1 ? scales[0] : concat_channels(scales);

  Tensor<T> xf = x5;
  if (flags.use_fft) {
    const int c5 = x5.c();
    const ComplexPair<T> spec = fft2d(x5);
    const std::vector<Tensor<T>> ri{spec.real, spec.imag};
    const Tensor<T> mod = relu(freq_bn(freq(concat_channels(ri)), mode));
    const int split[2] = {c5, c5};
    const std::vector<Tensor<T>> parts = split_channels(mod, std::span<const int>(split));
    xf = ifft2d(ComplexPair<T>{parts[0], parts[1]}, ResidueCheck::kRealPart);
  }
  Tensor<T> y = add(reduce(xf), x2);
  if (flags.use_cam) y = channel_attention(y, cam);
  return y;
}

template <typename T>
void MfmBlock<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  expand.visit(join_name(prefix, "expand"), v);
  if (flags.use_d3) dconv3.visit(join_name(prefix, "dconv3"), v);
  if (flags.use_d5) dconv5.visit(join_name(prefix, "dconv5"), v);
  if (flags.use_fft) {
    freq.visit(join_name(prefix, "freq"), v);
    freq_bn.visit(join_name(prefix, "freq_bn"), v);
  }
  reduce.visit(join_name(prefix, "reduce"), v);
  if (flags.use_cam) cam.visit(join_name(prefix, "cam"), v);
}

template <typename T>
GpmBlock<T> GpmBlock<T>::make(int channels, int cam_ratio, SplitMix64& rng) {
  GpmBlock b;
  b.channels = channels;
  for (int i = 0; i < 3; ++i) {
    b.branch_conv[i] = Conv2d<T>::make(channels, channels, 3, 3, PadQuad::same(1), true, rng);
    b.branch_cam[i] = CamParams<T>::make(channels, cam_ratio, rng);
  }
  b.fuse = Conv2d<T>::make(4 * channels, channels, 3, 3, PadQuad::same(1), true, rng);
  b.aux_head = Conv2d<T>::make(channels, 1, 1, 1, {}, true, rng);
  return b;
}

namespace {

// Average-pools a square map down to `target` pixels per side.
template <typename T>
Tensor<T> pool_to(const Tensor<T>& t, int target) {
  if (t.h() == target) return t;
  if (t.h() % target != 0) {
    throw ShapeError("gpm_forward: " + std::to_string(t.h()) + " px not divisible into " +
                     std::to_string(target));
  }
  const int k = t.h() / target;
  return pool2d(t, PoolMode::kAvg, k, k);
}

}  // namespace

template <typename T>
GpmOutput<T> GpmBlock<T>::forward(const Tensor<T>& x) const {
  if (x.c() != channels) {
    throw ShapeError("gpm_forward: input has " + std::to_string(x.c()) + " channels, expected " +
                     std::to_string(channels));
  }
  if (x.h() != x.w()) throw ShapeError("gpm_forward: input must be square, got " + x.shape().str());
  const int s = x.h();
  if (s >= 8 && s % 8 != 0) {
    throw ShapeError("gpm_forward: spatial size " + std::to_string(s) + " not divisible by 8");
  }
  const int sizes[3] = {std::max(1, s / 2), std::max(1, s / 4), std::max(1, s / 8)};

  GpmOutput<T> out;
  Tensor<T> prev;
  for (int i = 0; i < 3; ++i) {
    Tensor<T> in = pool_to(x, sizes[i]);
    if (i > 0) in = add(in, pool_to(prev, sizes[i]));
    prev = channel_attention(branch_conv[i](in), branch_cam[i]);
    out.branches[i] = prev;
  }
  std::vector<Tensor<T>> cat{x};
  for (int i = 0; i < 3; ++i) {
    cat.push_back(upsample2d(out.branches[i], s / sizes[i], Interp::kBilinear));
  }
  out.fused = fuse(concat_channels(cat));
  out.aux_map = aux_head(out.fused);
  return out;
}

template <typename T>
void GpmBlock<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  for (int i = 0; i < 3; ++i) {
    const std::string name = join_name(prefix, "branch" + std::to_string(i));
    branch_conv[i].visit(join_name(name, "conv"), v);
    branch_cam[i].visit(join_name(name, "cam"), v);
  }
  fuse.visit(join_name(prefix, "fuse"), v);
  aux_head.visit(join_name(prefix, "aux_head"), v);
}

template <typename T>
GsgfLink<T> GsgfLink<T>::make(int gpm_c, int decoder_c, int factor, SplitMix64& rng,
                              T bn_momentum) {
  GsgfLink l;
  l.project = Conv2d<T>::make(gpm_c, decoder_c, 1, 1, {}, false, rng);
  l.project_bn = BatchNorm2d<T>::make(decoder_c, bn_momentum);
  l.factor = factor;
  return l;
}

template <typename T>
void GsgfLink<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  project.visit(join_name(prefix, "project"), v);
  project_bn.visit(join_name(prefix, "project_bn"), v);
}

// A 1x1 projection followed by a per-channel affine map commutes with
// bilinear upsampling (the interpolation weights sum to one), so projecting
// first does the same work on 1/f^2 of the pixels. In train mode the batch
// statistics are taken at the low resolution.
template <typename T>
Tensor<T> gsgf_apply(const Tensor<T>& decoder_feat, const Tensor<T>& gpm_fused,
                     GsgfLink<T>& link, Mode mode) {
  const Tensor<T> guide =
      upsample2d(link.project_bn(link.project(gpm_fused), mode), link.factor, Interp::kBilinear);
  if (!(guide.shape() == decoder_feat.shape())) {
    throw ShapeError("gsgf_apply: guidance " + guide.shape().str() + " vs decoder " +
                     decoder_feat.shape().str());
  }
  return add(decoder_feat, guide);
}

#define FSG_INSTANTIATE(T)                                                              \
  template struct PConvParams<T>;                                                       \
  template Tensor<T> pconv_forward(const Tensor<T>&, const PConvParams<T>&);            \
  template struct MiamBlock<T>;                                                         \
  template struct MfmBlock<T>;                                                          \
  template struct GpmBlock<T>;                                                          \
  template struct GsgfLink<T>;                                                          \
  template Tensor<T> gsgf_apply(const Tensor<T>&, const Tensor<T>&, GsgfLink<T>&, Mode);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg
