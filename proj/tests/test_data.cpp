#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fsg/data.hpp"
#include "fsg/errors.hpp"
#include "fsg/pgm.hpp"
#include "oracles.hpp"

using fsg::Shape;
using TF = fsg::Tensor<float>;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fsgnet_unit_data" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<float> flat(const TF& t) { return {t.data().begin(), t.data().end()}; }

int positives(const TF& mask) {
  int n = 0;
  for (float v : mask.data()) n += v > 0.5f;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("degenerate scene is uniform background with empty mask") {
    fsg::SceneSpec spec;
    spec.hw = 16;
    spec.background_level = 0.3;
    const auto s = fsg::synth_scene(spec);
    for (float v : s.image.data()) CHECK(v == doctest::Approx(0.3f));
    CHECK(positives(s.mask) == 0);
  }

  TEST_CASE("single target mask is the half-peak disc and grows with sigma") {
    int previous = 0;
    for (double sigma : {0.5, 1.0, 1.5, 2.0}) {
      fsg::SceneSpec spec;
      spec.hw = 32;
      spec.targets = {fsg::TargetSpec{16, 16, sigma, 1.0}};
      const auto s = fsg::synth_scene(spec);
      CHECK(s.mask.at(0, 0, 16, 16) == 1.0f);
      // Direct evaluation of the level set exp(-r^2 / 2 sigma^2) >= 1/2.
      int expected = 0;
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          const double r2 = (x - 16.0) * (x - 16.0) + (y - 16.0) * (y - 16.0);
          const bool in = std::exp(-r2 / (2 * sigma * sigma)) >= 0.5;
          expected += in;
          CHECK((s.mask.at(0, 0, y, x) == 1.0f) == in);
        }
      }
      CHECK(positives(s.mask) == expected);
      CHECK(expected >= previous);
      previous = expected;
    }
  }

  TEST_CASE("scene generation is deterministic and noise leaves the mask alone") {
    const auto tmpl = fsg::hard_template();
    const auto spec = fsg::sample_scene_spec(tmpl, 123);
    const auto a = fsg::synth_scene(spec);
    const auto b = fsg::synth_scene(spec);
    CHECK(flat(a.image) == flat(b.image));
    CHECK(flat(a.mask) == flat(b.mask));
    auto quiet = spec;
    quiet.noise_sigma = 0;
    const auto c = fsg::synth_scene(quiet);
    CHECK(flat(c.mask) == flat(a.mask));
    CHECK(flat(c.image) != flat(a.image));
    for (float v : a.image.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  TEST_CASE("mask lies inside the support of the clean targets") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto spec = fsg::sample_scene_spec(fsg::hard_template(), seed);
      const auto s = fsg::synth_scene(spec);
      for (int y = 0; y < spec.hw; ++y) {
        for (int x = 0; x < spec.hw; ++x) {
          if (s.mask.at(0, 0, y, x) == 0.0f) continue;
          double clean = 0;
          for (const auto& t : spec.targets) {
            clean += t.amplitude *
                     std::exp(-((x - t.cx) * (x - t.cx) + (y - t.cy) * (y - t.cy)) /
                              (2 * t.sigma * t.sigma));
          }
          CHECK(clean > 0.0);
        }
      }
      CHECK(positives(s.mask) >= 1);
    }
  }

  TEST_CASE("spec validation and JSON field names") {
    fsg::SceneSpec spec;
    spec.targets = {fsg::TargetSpec{5, 5, 3.0, 1.0}};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.targets[0].sigma = 1.0;
    spec.noise_sigma = 7;
    spec.rng_seed = 99;
    const nlohmann::json j = spec;
    for (const char* key : {"hw", "targets", "clutter", "background_level", "noise_sigma", "rng_seed"}) {
      CHECK(j.contains(key));
    }
    const auto back = j.get<fsg::SceneSpec>();
    CHECK(back.rng_seed == 99);
    CHECK(back.targets[0].sigma == 1.0);
  }

  TEST_CASE("gaussian noise") {
    const TF flat_img(Shape{1, 1, 64, 64}, 0.5f);
    CHECK(flat(fsg::add_gaussian_noise(flat_img, 0.0, 1)) == flat(flat_img));
    const auto moments = [&](double sigma) {
      const TF n = fsg::add_gaussian_noise(flat_img, sigma, 2);
      double s = 0, sq = 0;
      for (float v : n.data()) s += v - 0.5;
      const double mean = s / n.size();
      for (float v : n.data()) sq += (v - 0.5 - mean) * (v - 0.5 - mean);
      return std::sqrt(sq / (n.size() - 1));
    };
    CHECK(std::abs(moments(20) - 20.0 / 255) < 0.1 * 20.0 / 255);
    CHECK(moments(30) > moments(10));
  }

  TEST_CASE("augmentation: identity draw, permutation and inverse") {
    std::uint64_t identity_seed = 0;
    while (!fsg::draw_augment(identity_seed).identity()) ++identity_seed;
    const auto scene = fsg::synth_scene(fsg::sample_scene_spec(fsg::toy_template(), 5));
    const auto [ii, mm] = fsg::augment(scene.image, scene.mask, identity_seed);
    CHECK(flat(ii) == flat(scene.image));
    CHECK(flat(mm) == flat(scene.mask));

    TF asym(Shape{1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) asym.data()[i] = static_cast<float>(i);
    std::set<std::vector<float>> seen;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto d = fsg::draw_augment(seed);
      const auto [img, mask] = fsg::augment(scene.image, scene.mask, seed);
      CHECK(positives(mask) == positives(scene.mask));
      CHECK(flat(fsg::invert_augment(img, d)) == flat(scene.image));
      CHECK(flat(fsg::invert_augment(mask, d)) == flat(scene.mask));
      seen.insert(flat(fsg::apply_augment(asym, d)));
    }
    // Flips and quarter turns generate the 8 symmetries of the square.
    CHECK(seen.size() == 8);

    TF corner(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    const auto ccw = fsg::apply_augment(corner, fsg::AugmentDraw{false, false, 1});
    CHECK(flat(ccw) == std::vector<float>{2, 4, 1, 3});
  }

  TEST_CASE("pgm decode, round trip and truncation") {
    const std::string bytes = std::string("P5\n2 2\n255\n") + std::string("\x00\x80\xff\x40", 4);
    const TF t = fsg::decode_pgm(bytes);
    CHECK(t.shape() == Shape{1, 1, 2, 2});
    CHECK(flat(t) == std::vector<float>{0.0f, 128 / 255.0f, 1.0f, 64 / 255.0f});
    CHECK(fsg::encode_pgm(t) == bytes);
    const auto dir = scratch("pgm");
    std::ofstream((dir / "a.pgm").string(), std::ios::binary) << bytes;
    fsg::write_pgm(fsg::read_pgm((dir / "a.pgm").string()), (dir / "b.pgm").string());
    CHECK(slurp(dir / "b.pgm") == bytes);
    const std::string commented = "P5\n# comment\n2 2\n255\n" + std::string("\x00\x80\xff\x40", 4);
    CHECK(flat(fsg::decode_pgm(commented)) == flat(t));
    try {
      fsg::decode_pgm(bytes.substr(0, bytes.size() - 3));
      FAIL("expected a data error");
    } catch (const fsg::DataError& e) {
      CHECK(std::string(e.what()).find("3 bytes short") != std::string::npos);
    }
    CHECK_THROWS_AS(fsg::decode_pgm("P2\n2 2\n255\n0 0 0 0"), fsg::DataError);
    CHECK_THROWS_AS(fsg::read_pgm((dir / "nope.pgm").string()), fsg::DataError);
  }

  TEST_CASE("manifest split sizes, determinism and non-empty masks") {
    auto tmpl = fsg::toy_template();
    tmpl.hw = 32;
    const auto a = scratch("manifest_a"), b = scratch("manifest_b");
    const auto m = fsg::build_manifest(a.string(), 0.8, tmpl, 160, 7);
    fsg::build_manifest(b.string(), 0.8, tmpl, 160, 7);
    CHECK(m.split("train").size() == 128);
    CHECK(m.split("test").size() == 32);
    CHECK(slurp(a / "manifest.tsv") == slurp(b / "manifest.tsv"));
    CHECK(slurp(a / "scene_0042.pgm") == slurp(b / "scene_0042.pgm"));
    CHECK(slurp(a / "mask_0159.pgm") == slurp(b / "mask_0159.pgm"));
    const auto read = fsg::read_manifest(a.string());
    CHECK(read.entries.size() == 160);
    for (const auto& split : {"train", "test"}) {
      for (const auto& s : fsg::load_split(read, split)) CHECK(positives(s.mask) >= 1);
    }
    const auto renoised = fsg::renoise_split(read, "test", tmpl.noise_sigma);
    const auto loaded = fsg::load_split(read, "test");
    REQUIRE(renoised.size() == loaded.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      CHECK(flat(renoised[i].image) == flat(loaded[i].image));
      CHECK(flat(renoised[i].mask) == flat(loaded[i].mask));
    }
    CHECK_THROWS_AS(fsg::read_manifest(scratch("empty").string()), fsg::DataError);
  }
}
