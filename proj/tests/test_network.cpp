#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fsg/errors.hpp"
#include "fsg/checkpoint.hpp"
#include "fsg/errors.hpp"
#include "fsg/network.hpp"
#include "oracles.hpp"

using fsg::Shape;
using TF = fsg::Tensor<float>;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fsgnet_unit_network";
  fs::create_directories(dir);
  return dir / name;
}

fsg::FsgnetConfig all_off() {
  fsg::FsgnetConfig c;
  c.use_miam = c.use_mfm = c.use_gpm = false;
  c.gsgf_count = 0;
  return c;
}

std::vector<float> flat(const TF& t) { return {t.data().begin(), t.data().end()}; }

// Independent enumeration of the all-off network: plain residual blocks,
// plain 3x3 bottleneck conv, bilinear decoder, 1x1 head.
fsg::Complexity hand_count_all_off(const std::array<int, 5>& c, int hw) {
  fsg::Complexity out;
  const auto plain_block = [&](int in, int ch, int s) {
    out.params += 9ull * in * ch + 9ull * ch * ch + 4ull * ch;
    out.conv_macs += static_cast<std::uint64_t>(s) * s * (9ull * in * ch + 9ull * ch * ch);
    if (in != ch) {
      out.params += 1ull * in * ch + 2ull * ch;
      out.conv_macs += static_cast<std::uint64_t>(s) * s * in * ch;
    }
  };
  for (int k = 0; k < 4; ++k) plain_block(k == 0 ? 1 : c[k - 1], c[k], hw >> k);
  plain_block(c[3], c[4], hw >> 4);
  out.params += 9ull * c[4] * c[4] + 2ull * c[4];
  out.conv_macs += static_cast<std::uint64_t>(hw >> 4) * (hw >> 4) * 9 * c[4] * c[4];
  for (int k = 0; k < 4; ++k) {
    const std::uint64_t s = hw >> k;
    out.params += 9ull * c[k + 1] * c[k] + 2ull * c[k];
    out.conv_macs += s * s * 9 * c[k + 1] * c[k];
    plain_block(2 * c[k], c[k], hw >> k);
  }
  out.params += c[0] + 1;
  out.conv_macs += static_cast<std::uint64_t>(hw) * hw * c[0];
  return out;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("default config builds with the bottleneck at H/16") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 1);
    fsg::FeatureTaps<float> taps;
    const auto out = net.forward(oracle::uniform<float>(Shape{1, 1, 64, 64}, 1, 0, 1),
                                 fsg::Mode::kEval, &taps);
    CHECK(taps.at("bottleneck").shape() == Shape{1, 128, 4, 4});
    CHECK(taps.at("gpm.fused").shape() == Shape{1, 128, 4, 4});
    for (int k = 0; k < 4; ++k) {
      CHECK(taps.at("mfm." + std::to_string(k) + ".out").h() == 64 >> k);
      CHECK(taps.at("dec." + std::to_string(k)).shape() ==
            taps.at("enc." + std::to_string(k)).shape());
    }
    CHECK(taps.size() == fsg::tap_names().size());
    CHECK(out.aux.shape() == out.o_final.shape());
  }

  TEST_CASE("all-off config is the plain U-Net") {
    auto net = fsg::build_network<float>(all_off(), 1);
    for (const auto& p : fsg::collect(net).params) {
      CAPTURE(p.name);
      CHECK(p.name.find("mfm") == std::string::npos);
      CHECK(p.name.find("gpm") == std::string::npos);
      CHECK(p.name.find("gsgf") == std::string::npos);
      CHECK(p.name.find("pconv") == std::string::npos);
      CHECK(p.name.find("cam") == std::string::npos);
      CHECK(p.name.find("sam") == std::string::npos);
    }
    const auto out = net.forward(TF(Shape{1, 1, 64, 64}, 0.5f), fsg::Mode::kEval);
    CHECK_FALSE(out.aux.defined());
  }

  TEST_CASE("same seed gives bit-identical parameters, different seeds differ") {
    auto a = fsg::build_network<float>(fsg::FsgnetConfig{}, 42);
    auto b = fsg::build_network<float>(fsg::FsgnetConfig{}, 42);
    auto c = fsg::build_network<float>(fsg::FsgnetConfig{}, 43);
    const auto pa = fsg::collect(a).params, pb = fsg::collect(b).params, pc = fsg::collect(c).params;
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(flat(pa[i].tensor) == flat(pb[i].tensor));
      any_diff = any_diff || flat(pa[i].tensor) != flat(pc[i].tensor);
    }
    CHECK(any_diff);
  }

  TEST_CASE("ablating a module leaves the initialization of the others unchanged") {
    auto full = fsg::build_network<float>(fsg::FsgnetConfig{}, 5);
    fsg::FsgnetConfig cfg;
    cfg.use_mfm = false;
    auto ablated = fsg::build_network<float>(cfg, 5);
    CHECK(flat(full.head.weight) == flat(ablated.head.weight));
    CHECK(flat(full.decoder[2].conv1.weight) == flat(ablated.decoder[2].conv1.weight));
    CHECK(flat(full.encoder[1][0].pconv1.fuse.weight) ==
          flat(ablated.encoder[1][0].pconv1.fuse.weight));
  }

  TEST_CASE("forward: sigmoid range, shape and eval determinism") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 2);
    const TF x = oracle::uniform<float>(Shape{2, 1, 64, 64}, 3, 0, 1);
    const auto a = net.forward(x, fsg::Mode::kEval);
    const auto b = net.forward(x, fsg::Mode::kEval);
    CHECK(a.o_final.shape() == Shape{2, 1, 64, 64});
    for (float v : a.o_final.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    CHECK(flat(a.o_final) == flat(b.o_final));
    CHECK_THROWS_AS(net.forward(TF(Shape{1, 1, 32, 32}), fsg::Mode::kEval), fsg::ShapeError);
  }

  TEST_CASE("eval forward is independent of batch order") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 4);
    const TF a = oracle::uniform<float>(Shape{1, 1, 64, 64}, 5, 0, 1);
    const TF b = oracle::uniform<float>(Shape{1, 1, 64, 64}, 6, 0, 1);
    const auto stack = [](const TF& first, const TF& second) {
      std::vector<float> v = flat(first);
      v.insert(v.end(), second.data().begin(), second.data().end());
      return TF(Shape{2, 1, 64, 64}, std::move(v));
    };
    const TF yab = net.forward(stack(a, b), fsg::Mode::kEval).o_final;
    const TF yba = net.forward(stack(b, a), fsg::Mode::kEval).o_final;
    const std::size_t plane = 64 * 64;
    for (std::size_t i = 0; i < plane; ++i) {
      CHECK(yab.data()[i] == doctest::Approx(yba.data()[plane + i]).epsilon(1e-6));
      CHECK(yab.data()[plane + i] == doctest::Approx(yba.data()[i]).epsilon(1e-6));
    }
  }

  TEST_CASE("guidance links are live") {
    fsg::FsgnetConfig none;
    none.gsgf_count = 0;
    auto with = fsg::build_network<float>(fsg::FsgnetConfig{}, 7);
    auto without = fsg::build_network<float>(none, 7);
    const TF x = oracle::uniform<float>(Shape{1, 1, 64, 64}, 8, 0, 1);
    const auto diff = oracle::max_abs_diff(oracle::as_double(with.forward(x, fsg::Mode::kEval).o_final),
                                           oracle::as_double(without.forward(x, fsg::Mode::kEval).o_final));
    CHECK(diff > 1e-6);
    int links = 0;
    for (const auto& l : with.gsgf) links += l ? 1 : 0;
    CHECK(links == 4);
    CHECK(with.gsgf[3]->factor == 2);
    CHECK(with.gsgf[0]->factor == 16);
  }

  TEST_CASE("config validation and JSON round trip") {
    fsg::FsgnetConfig c;
    c.input_hw = 48;
    CHECK_THROWS_AS(c.validate(), fsg::ShapeError);
    c = fsg::FsgnetConfig{};
    c.use_gpm = false;
    CHECK_THROWS_AS(c.validate(), fsg::ShapeError);
    c.gsgf_count = 0;
    c.miam.use_sam = false;
    c.mfm.use_d5 = false;
    c.stage_channels = {4, 8, 8, 16, 16};
    const nlohmann::json j = c;
    CHECK(j.get<fsg::FsgnetConfig>() == c);
    const auto partial = nlohmann::json::parse(R"({"input_hw": 32, "mfm": {"use_fft": false}})")
                             .get<fsg::FsgnetConfig>();
    CHECK(partial.input_hw == 32);
    CHECK_FALSE(partial.mfm.use_fft);
    CHECK(partial.mfm.use_d3);
    CHECK(partial.stage_channels == fsg::FsgnetConfig{}.stage_channels);
  }

  TEST_CASE("parameter and MAC counts") {
    fsg::SplitMix64 rng(1);
    auto conv = fsg::Conv2d<float>::make(8, 16, 1, 1, {}, true, rng);
    CHECK(fsg::count_params(conv) == 144);

    for (const auto& [widths, hw] : std::vector<std::pair<std::array<int, 5>, int>>{
             {{2, 3, 4, 5, 6}, 16}, {{8, 16, 32, 64, 128}, 64}, {{1, 1, 1, 1, 1}, 32}}) {
      auto cfg = all_off();
      cfg.stage_channels = widths;
      cfg.input_hw = hw;
      cfg.cam_ratio = 1;
      auto net = fsg::build_network<float>(cfg, 1);
      const auto got = fsg::count_params_flops(net);
      const auto want = hand_count_all_off(widths, hw);
      CHECK(got.params == want.params);
      CHECK(got.conv_macs == want.conv_macs);
      CHECK(got.fft_flops == 0);
    }
  }

  TEST_CASE("default config complexity regression values") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 1);
    const auto c = fsg::count_params_flops(net);
    CHECK(c.params == 2321653);
    CHECK(c.conv_macs == 132922144);
    CHECK(c.fft_flops == 12943360);
    // The lightweight bound cannot hold at these stage widths: the GPM alone
    // holds about a million parameters. Reported, not enforced.
    WARN_LT(c.params, 1000000);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 9);
    // Perturb running statistics so buffers are covered too.
    net.forward(oracle::uniform<float>(Shape{2, 1, 64, 64}, 10, 0, 1), fsg::Mode::kTrain);
    const auto path = scratch("roundtrip.fsgn").string();
    fsg::save_checkpoint(net, path);
    auto loaded = fsg::load_checkpoint(path);
    CHECK(loaded.cfg == net.cfg);
    const auto a = fsg::collect(net), b = fsg::collect(loaded);
    REQUIRE(a.params.size() == b.params.size());
    REQUIRE(a.buffers.size() == b.buffers.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      CHECK(a.params[i].name == b.params[i].name);
      CHECK(flat(a.params[i].tensor) == flat(b.params[i].tensor));
    }
    for (std::size_t i = 0; i < a.buffers.size(); ++i) {
      CHECK(flat(a.buffers[i].tensor) == flat(b.buffers[i].tensor));
    }
    const TF x = oracle::uniform<float>(Shape{1, 1, 64, 64}, 11, 0, 1);
    CHECK(flat(net.forward(x, fsg::Mode::kEval).o_final) ==
          flat(loaded.forward(x, fsg::Mode::kEval).o_final));
  }

  TEST_CASE("checkpoint corruption and mismatch are data errors") {
    auto net = fsg::build_network<float>(fsg::FsgnetConfig{}, 12);
    const auto path = scratch("good.fsgn").string();
    fsg::save_checkpoint(net, path);
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto write = [](const std::string& p, const std::string& b) {
      std::ofstream(p, std::ios::binary) << b;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    write(scratch("magic.fsgn").string(), bad_magic);
    CHECK_THROWS_AS(fsg::load_checkpoint(scratch("magic.fsgn").string()), fsg::DataError);
    write(scratch("short.fsgn").string(), bytes.substr(0, bytes.size() - 100));
    CHECK_THROWS_AS(fsg::load_checkpoint(scratch("short.fsgn").string()), fsg::DataError);
    CHECK_THROWS_AS(fsg::load_checkpoint(scratch("missing.fsgn").string()), fsg::DataError);

    fsg::FsgnetConfig cfg;
    cfg.use_mfm = false;
    auto ablated = fsg::build_network<float>(cfg, 12);
    const auto ablated_path = scratch("ablated.fsgn").string();
    fsg::save_checkpoint(ablated, ablated_path);
    CHECK_THROWS_AS(fsg::load_checkpoint_into(net, ablated_path), fsg::DataError);
    CHECK(fsg::read_checkpoint_config(ablated_path) == cfg);
  }
}
