#include "fsg/network.hpp"

#include <bit>

#include "fsg/errors.hpp"
#include "fsg/kernels.hpp"

namespace fsg {

void FsgnetConfig::validate() const {
  if (input_hw <= 0 || !kernels::is_power_of_two(input_hw)) {
    throw ShapeError("config: input_hw " + std::to_string(input_hw) + " is not a power of two");
  }
  if (input_hw % 16 != 0) {
    throw ShapeError("config: input_hw " + std::to_string(input_hw) + " not divisible by 16");
  }
  for (int c : stage_channels) {
    if (c <= 0) throw ShapeError("config: non-positive stage width");
    const int r = std::min(cam_ratio, c);
    if (c % r != 0) {
      throw ShapeError("config: stage width " + std::to_string(c) +
                       " not divisible by cam_ratio " + std::to_string(cam_ratio));
    }
  }
  if (cam_ratio <= 0) throw ShapeError("config: cam_ratio must be positive");
  if (depth < 1) throw ShapeError("config: depth must be >= 1");
  if (gsgf_count < 0 || gsgf_count > 4) {
    throw ShapeError("config: gsgf_count " + std::to_string(gsgf_count) + " outside 0..4");
  }
  if (gsgf_count > 0 && !use_gpm) throw ShapeError("config: gsgf_count > 0 requires use_gpm");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    throw ShapeError("config: bn_momentum must be in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const FsgnetConfig& c) {
  j = nlohmann::json{
      {"input_hw", c.input_hw},
      {"stage_channels", c.stage_channels},
      {"use_miam", c.use_miam},
      {"use_mfm", c.use_mfm},
      {"use_gpm", c.use_gpm},
      {"gsgf_count", c.gsgf_count},
      {"miam",
       {{"use_pconv", c.miam.use_pconv},
        {"use_residual", c.miam.use_residual},
        {"use_cam", c.miam.use_cam},
        {"use_sam", c.miam.use_sam}}},
      {"mfm",
       {{"use_d3", c.mfm.use_d3},
        {"use_d5", c.mfm.use_d5},
        {"use_cam", c.mfm.use_cam},
        {"use_fft", c.mfm.use_fft}}},
      {"bn_momentum", c.bn_momentum},
      {"cam_ratio", c.cam_ratio},
      {"depth", c.depth},
  };
}

// Missing keys keep their defaults so partial config files work.
void from_json(const nlohmann::json& j, FsgnetConfig& c) {
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("input_hw", c.input_hw);
  get("stage_channels", c.stage_channels);
  get("use_miam", c.use_miam);
  get("use_mfm", c.use_mfm);
  get("use_gpm", c.use_gpm);
  get("gsgf_count", c.gsgf_count);
  get("bn_momentum", c.bn_momentum);
  get("cam_ratio", c.cam_ratio);
  get("depth", c.depth);
  if (j.contains("miam")) {
    const auto& m = j.at("miam");
    if (m.contains("use_pconv")) m.at("use_pconv").get_to(c.miam.use_pconv);
    if (m.contains("use_residual")) m.at("use_residual").get_to(c.miam.use_residual);
    if (m.contains("use_cam")) m.at("use_cam").get_to(c.miam.use_cam);
    if (m.contains("use_sam")) m.at("use_sam").get_to(c.miam.use_sam);
  }
  if (j.contains("mfm")) {
    const auto& m = j.at("mfm");
    if (m.contains("use_d3")) m.at("use_d3").get_to(c.mfm.use_d3);
    if (m.contains("use_d5")) m.at("use_d5").get_to(c.mfm.use_d5);
    if (m.contains("use_cam")) m.at("use_cam").get_to(c.mfm.use_cam);
    if (m.contains("use_fft")) m.at("use_fft").get_to(c.mfm.use_fft);
  }
}

std::vector<std::string> tap_names() {
  std::vector<std::string> names;
  for (int k = 0; k < 4; ++k) names.push_back("enc." + std::to_string(k));
  names.push_back("bottleneck");
  names.push_back("gpm.fused");
  for (int k = 0; k < 4; ++k) {
    names.push_back("mfm." + std::to_string(k) + ".in");
    names.push_back("mfm." + std::to_string(k) + ".out");
  }
  for (int k = 3; k >= 0; --k) names.push_back("dec." + std::to_string(k));
  return names;
}

namespace {

// Decoder level k sits at H / 2^k; the GPM feature sits at H / 16.
constexpr int gsgf_factor(int level) { return 1 << (4 - level); }

// Links attach at factors 2, 4, 8, 16 in that order, i.e. levels 3..0.
constexpr bool has_gsgf(int level, int count) { return 3 - level < count; }

// Component ids for per-component seeds, so that switching one module off
// leaves the initialization of every other module unchanged.
enum Component : std::uint64_t {
  kEncoder = 0,
  kBottleneck = 10,
  kGpm = 20,
  kSkip = 30,
  kUpConv = 40,
  kDecoder = 50,
  kGsgf = 60,
  kHead = 70,
};

}  // namespace

template <typename T>
Fsgnet<T> build_network(const FsgnetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Fsgnet<T> net;
  net.cfg = cfg;
  const auto& c = cfg.stage_channels;
  const T mom = static_cast<T>(cfg.bn_momentum);
  const MiamFlags enc_flags = cfg.use_miam ? cfg.miam : MiamFlags::plain();
  const auto rng_for = [seed](std::uint64_t id) { return SplitMix64(derive_seed(seed, id)); };

  for (int k = 0; k < 4; ++k) {
    SplitMix64 rng = rng_for(kEncoder + k);
    for (int d = 0; d < cfg.depth; ++d) {
      const int in = d == 0 ? (k == 0 ? 1 : c[k - 1]) : c[k];
      net.encoder[k].push_back(
          MiamBlock<T>::make(in, c[k], enc_flags, cfg.cam_ratio, rng, mom));
    }
  }
  {
    SplitMix64 rng = rng_for(kBottleneck);
    for (int d = 0; d < cfg.depth; ++d) {
      net.bottleneck.push_back(
          MiamBlock<T>::make(d == 0 ? c[3] : c[4], c[4], enc_flags, cfg.cam_ratio, rng, mom));
    }
  }
  {
    SplitMix64 rng = rng_for(kGpm);
    if (cfg.use_gpm) {
      net.gpm = GpmBlock<T>::make(c[4], cfg.cam_ratio, rng);
    } else {
      net.plain_bottleneck = Conv2d<T>::make(c[4], c[4], 3, 3, PadQuad::same(1), false, rng);
      net.plain_bottleneck_bn = BatchNorm2d<T>::make(c[4], mom);
    }
  }
  for (int k = 0; k < 4; ++k) {
    if (!cfg.use_mfm) continue;
    SplitMix64 rng = rng_for(kSkip + k);
    net.skip[k] = MfmBlock<T>::make(c[k], cfg.mfm, cfg.cam_ratio, rng, mom);
  }
  for (int k = 0; k < 4; ++k) {
    SplitMix64 up_rng = rng_for(kUpConv + k);
    net.up_conv[k] = Conv2d<T>::make(c[k + 1], c[k], 3, 3, PadQuad::same(1), false, up_rng);
    net.up_bn[k] = BatchNorm2d<T>::make(c[k], mom);
    SplitMix64 dec_rng = rng_for(kDecoder + k);
    net.decoder[k] =
        MiamBlock<T>::make(2 * c[k], c[k], MiamFlags::plain(), cfg.cam_ratio, dec_rng, mom);
    if (has_gsgf(k, cfg.gsgf_count)) {
      SplitMix64 rng = rng_for(kGsgf + k);
      net.gsgf[k] = GsgfLink<T>::make(c[4], c[k], gsgf_factor(k), rng, mom);
    }
  }
  SplitMix64 head_rng = rng_for(kHead);
  net.head = Conv2d<T>::make(c[0], 1, 1, 1, {}, true, head_rng);
  return net;
}

template <typename T>
FsgnetOutput<T> Fsgnet<T>::forward(const Tensor<T>& x, Mode mode, FeatureTaps<T>* taps) {
  const int hw = cfg.input_hw;
  if (x.c() != 1 || x.h() != hw || x.w() != hw) {
    throw ShapeError("forward: expected (n, 1, " + std::to_string(hw) + ", " +
                     std::to_string(hw) + ") input, got " + x.shape().str());
  }
  const auto tap = [taps](const std::string& name, const Tensor<T>& t) {
    if (taps) (*taps)[name] = t;
  };

  std::array<Tensor<T>, 4> enc;
  Tensor<T> h = x;
  for (int k = 0; k < 4; ++k) {
    for (auto& block : encoder[k]) h = block.forward(h, mode);
    enc[k] = h;
    tap("enc." + std::to_string(k), h);
    h = pool2d(h, PoolMode::kMax, 2, 2);
  }
  for (auto& block : bottleneck) h = block.forward(h, mode);
  tap("bottleneck", h);

  Tensor<T> aux_map;
  if (gpm) {
    GpmOutput<T> g = gpm->forward(h);
    h = g.fused;
    aux_map = g.aux_map;
  } else {
    h = relu(plain_bottleneck_bn(plain_bottleneck(h), mode));
  }
  const Tensor<T> gpm_fused = h;
  tap("gpm.fused", h);

  std::array<Tensor<T>, 4> skips;
  for (int k = 0; k < 4; ++k) {
    tap("mfm." + std::to_string(k) + ".in", enc[k]);
    skips[k] = skip[k] ? skip[k]->forward(enc[k], mode) : enc[k];
    tap("mfm." + std::to_string(k) + ".out", skips[k]);
  }

  for (int k = 3; k >= 0; --k) {
    const Tensor<T> up =
        relu(up_bn[k](up_conv[k](upsample2d(h, 2, Interp::kBilinear)), mode));
    const std::vector<Tensor<T>> parts{up, skips[k]};
    h = decoder[k].forward(concat_channels(parts), mode);
    if (gsgf[k]) h = gsgf_apply(h, gpm_fused, *gsgf[k], mode);
    tap("dec." + std::to_string(k), h);
  }

  FsgnetOutput<T> out;
  out.o_final = sigmoid(head(h));
  if (aux_map.defined()) {
    out.aux = sigmoid(upsample2d(aux_map, hw / aux_map.h(), Interp::kBilinear));
  }
  return out;
}

template <typename T>
void Fsgnet<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  for (int k = 0; k < 4; ++k) {
    for (std::size_t d = 0; d < encoder[k].size(); ++d) {
      encoder[k][d].visit(
          join_name(prefix, "enc." + std::to_string(k) + "." + std::to_string(d)), v);
    }
  }
  for (std::size_t d = 0; d < bottleneck.size(); ++d) {
    bottleneck[d].visit(join_name(prefix, "bottleneck." + std::to_string(d)), v);
  }
  if (gpm) {
    gpm->visit(join_name(prefix, "gpm"), v);
  } else {
    plain_bottleneck.visit(join_name(prefix, "plain_bottleneck"), v);
    plain_bottleneck_bn.visit(join_name(prefix, "plain_bottleneck_bn"), v);
  }
  for (int k = 0; k < 4; ++k) {
    if (skip[k]) skip[k]->visit(join_name(prefix, "mfm." + std::to_string(k)), v);
  }
  for (int k = 3; k >= 0; --k) {
    up_conv[k].visit(join_name(prefix, "up." + std::to_string(k)), v);
    up_bn[k].visit(join_name(prefix, "up_bn." + std::to_string(k)), v);
    decoder[k].visit(join_name(prefix, "dec." + std::to_string(k)), v);
    if (gsgf[k]) gsgf[k]->visit(join_name(prefix, "gsgf." + std::to_string(k)), v);
  }
  head.visit(join_name(prefix, "head"), v);
}

template <typename T>
Complexity count_params_flops(Fsgnet<T>& net) {
  Complexity out;
  out.params = count_params(net);
  const int hw = net.cfg.input_hw;
  const Tensor<T> probe(Shape{1, 1, hw, hw});
  FlopCounter counter;
  net.forward(probe, Mode::kEval);
  out.conv_macs = counter.conv_macs();
  out.fft_flops = counter.fft_flops();
  return out;
}

template struct Fsgnet<float>;
template struct Fsgnet<double>;
template Fsgnet<float> build_network(const FsgnetConfig&, std::uint64_t);
template Fsgnet<double> build_network(const FsgnetConfig&, std::uint64_t);
template Complexity count_params_flops(Fsgnet<float>&);
template Complexity count_params_flops(Fsgnet<double>&);

}  // namespace fsg
