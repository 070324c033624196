#include "fsg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fsg/errors.hpp"
#include "fsg/pgm.hpp"
#include "fsg/rng.hpp"

namespace fsg {

namespace fs = std::filesystem;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_range(const std::array<double, 2>& r, double lo, double hi, const char* what) {
  require(r[0] <= r[1], std::string(what) + ": range is reversed");
  require(r[0] >= lo && r[1] <= hi, std::string(what) + ": range outside [" + std::to_string(lo) +
                                        ", " + std::to_string(hi) + "]");
}

void check_clutter(const ClutterSpec& c) {
  require(c.num_blobs >= 0, "clutter.num_blobs must be >= 0");
  check_range(c.blob_sigma, 1e-3, 1e3, "clutter.blob_sigma");
  check_range(c.blob_amplitude, 0.0, 1.0, "clutter.blob_amplitude");
}

double gaussian(double dx, double dy, double sigma) {
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

template <typename F>
void for_each_pixel(int hw, F&& f) {
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) f(y, x, static_cast<std::size_t>(y) * hw + x);
  }
}

}  // namespace

void SceneSpec::validate() const {
  require(hw > 0, "hw must be positive");
  for (const TargetSpec& t : targets) {
    require(t.cx >= 0 && t.cx <= hw - 1 && t.cy >= 0 && t.cy <= hw - 1,
            "target centre outside the frame");
    require(t.sigma >= 0.5 && t.sigma <= 2.0, "target sigma outside [0.5, 2.0]");
    require(t.amplitude >= 0 && t.amplitude <= 1, "target amplitude outside [0, 1]");
  }
  check_clutter(clutter);
  require(background_level >= 0 && background_level <= 1, "background_level outside [0, 1]");
  require(noise_sigma >= 0, "noise_sigma must be >= 0");
}

void to_json(nlohmann::json& j, const TargetSpec& t) {
  j = {{"cx", t.cx}, {"cy", t.cy}, {"sigma", t.sigma}, {"amplitude", t.amplitude}};
}
void from_json(const nlohmann::json& j, TargetSpec& t) {
  j.at("cx").get_to(t.cx);
  j.at("cy").get_to(t.cy);
  j.at("sigma").get_to(t.sigma);
  j.at("amplitude").get_to(t.amplitude);
}
void to_json(nlohmann::json& j, const ClutterSpec& c) {
  j = {{"num_blobs", c.num_blobs},
       {"blob_sigma", c.blob_sigma},
       {"blob_amplitude", c.blob_amplitude}};
}
void from_json(const nlohmann::json& j, ClutterSpec& c) {
  j.at("num_blobs").get_to(c.num_blobs);
  j.at("blob_sigma").get_to(c.blob_sigma);
  j.at("blob_amplitude").get_to(c.blob_amplitude);
}
void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"hw", s.hw},
       {"targets", s.targets},
       {"clutter", s.clutter},
       {"background_level", s.background_level},
       {"noise_sigma", s.noise_sigma},
       {"rng_seed", s.rng_seed}};
}
void from_json(const nlohmann::json& j, SceneSpec& s) {
  j.at("hw").get_to(s.hw);
  j.at("targets").get_to(s.targets);
  j.at("clutter").get_to(s.clutter);
  j.at("background_level").get_to(s.background_level);
  j.at("noise_sigma").get_to(s.noise_sigma);
  j.at("rng_seed").get_to(s.rng_seed);
}

Scene synth_scene(const SceneSpec& spec) {
  spec.validate();
  const int hw = spec.hw;
  const std::size_t n = static_cast<std::size_t>(hw) * hw;
  std::vector<double> img(n, spec.background_level);

  SplitMix64 clutter_rng(derive_seed(spec.rng_seed, 0));
  for (int b = 0; b < spec.clutter.num_blobs; ++b) {
    const double cx = clutter_rng.uniform(0, hw - 1);
    const double cy = clutter_rng.uniform(0, hw - 1);
    const double s = clutter_rng.uniform(spec.clutter.blob_sigma[0], spec.clutter.blob_sigma[1]);
    const double a =
        clutter_rng.uniform(spec.clutter.blob_amplitude[0], spec.clutter.blob_amplitude[1]);
    for_each_pixel(hw, [&](int y, int x, std::size_t i) { img[i] += a * gaussian(x - cx, y - cy, s); });
  }

  Scene scene;
  scene.mask = Tensor<float>(Shape{1, 1, hw, hw});
  auto mask = scene.mask.data();
  for (const TargetSpec& t : spec.targets) {
    for_each_pixel(hw, [&](int y, int x, std::size_t i) {
      const double g = gaussian(x - t.cx, y - t.cy, t.sigma);
      img[i] += t.amplitude * g;
      if (t.amplitude > 0 && g >= 0.5) mask[i] = 1.0f;
    });
  }

  Tensor<float> clean(Shape{1, 1, hw, hw});
  auto c = clean.data();
  for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  scene.image = spec.noise_sigma > 0
                    ? add_gaussian_noise(clean, spec.noise_sigma, derive_seed(spec.rng_seed, 1))
                    : clean;
  return scene;
}

Tensor<float> add_gaussian_noise(const Tensor<float>& image, double sigma_n, std::uint64_t seed) {
  if (sigma_n < 0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
  Tensor<float> out = image.clone();
  if (sigma_n == 0) return out;
  SplitMix64 rng(seed);
  const double s = sigma_n / 255.0;
  for (float& v : out.data()) {
    v = static_cast<float>(std::clamp(static_cast<double>(v) + s * rng.normal(), 0.0, 1.0));
  }
  return out;
}

AugmentDraw draw_augment(std::uint64_t seed) {
  SplitMix64 rng(seed);
  AugmentDraw d;
  d.hflip = rng.coin();
  d.vflip = rng.coin();
  d.quarter_turns = static_cast<int>(rng.below(4));
  return d;
}

namespace {

enum class Step { kHFlip, kVFlip, kRotCcw, kRotCw };

Tensor<float> apply_step(const Tensor<float>& t, Step step) {
  const Shape s = t.shape();
  if (s.h != s.w) throw ShapeError("augment: square input required, got " + s.str());
  const int n = s.h;
  Tensor<float> out(s);
  const auto src = t.data();
  auto dst = out.data();
  for (int p = 0; p < s.n * s.c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * s.plane();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        int si = i, sj = j;
        switch (step) {
          case Step::kHFlip: sj = n - 1 - j; break;
          case Step::kVFlip: si = n - 1 - i; break;
          case Step::kRotCcw: si = j; sj = n - 1 - i; break;
          case Step::kRotCw: si = n - 1 - j; sj = i; break;
        }
        dst[base + static_cast<std::size_t>(i) * n + j] =
            src[base + static_cast<std::size_t>(si) * n + sj];
      }
    }
  }
  return out;
}

}  // namespace

Tensor<float> apply_augment(const Tensor<float>& t, const AugmentDraw& d) {
  Tensor<float> out = t.clone();
  if (d.hflip) out = apply_step(out, Step::kHFlip);
  if (d.vflip) out = apply_step(out, Step::kVFlip);
  for (int k = 0; k < d.quarter_turns; ++k) out = apply_step(out, Step::kRotCcw);
  return out;
}

Tensor<float> invert_augment(const Tensor<float>& t, const AugmentDraw& d) {
  Tensor<float> out = t.clone();
  for (int k = 0; k < d.quarter_turns; ++k) out = apply_step(out, Step::kRotCw);
  if (d.vflip) out = apply_step(out, Step::kVFlip);
  if (d.hflip) out = apply_step(out, Step::kHFlip);
  return out;
}

std::pair<Tensor<float>, Tensor<float>> augment(const Tensor<float>& image,
                                                const Tensor<float>& mask, std::uint64_t seed) {
  const AugmentDraw d = draw_augment(seed);
  return {apply_augment(image, d), apply_augment(mask, d)};
}

void SceneTemplate::validate() const {
  require(hw > 0, "template hw must be positive");
  require(num_targets[0] >= 0 && num_targets[0] <= num_targets[1], "bad num_targets range");
  check_range(target_sigma, 0.5, 2.0, "target_sigma");
  check_range(target_amplitude, 0.0, 1.0, "target_amplitude");
  require(target_margin >= 0 && 2 * target_margin < hw - 1, "target_margin too large");
  check_clutter(clutter);
  check_range(background_level, 0.0, 1.0, "background_level");
  require(noise_sigma >= 0, "noise_sigma must be >= 0");
}

void to_json(nlohmann::json& j, const SceneTemplate& t) {
  j = {{"hw", t.hw},
       {"num_targets", t.num_targets},
       {"target_sigma", t.target_sigma},
       {"target_amplitude", t.target_amplitude},
       {"target_margin", t.target_margin},
       {"clutter", t.clutter},
       {"background_level", t.background_level},
       {"noise_sigma", t.noise_sigma}};
}

void from_json(const nlohmann::json& j, SceneTemplate& t) {
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("hw", t.hw);
  get("num_targets", t.num_targets);
  get("target_sigma", t.target_sigma);
  get("target_amplitude", t.target_amplitude);
  get("target_margin", t.target_margin);
  get("clutter", t.clutter);
  get("background_level", t.background_level);
  get("noise_sigma", t.noise_sigma);
}

SceneTemplate toy_template() {
  SceneTemplate t;
  t.num_targets = {1, 1};
  t.target_sigma = {1.0, 2.0};
  t.target_amplitude = {0.5, 0.9};
  t.clutter = ClutterSpec{3, {3.0, 6.0}, {0.05, 0.2}};
  t.background_level = {0.1, 0.3};
  t.noise_sigma = 5.0;
  return t;
}

SceneTemplate hard_template() {
  SceneTemplate t;
  t.num_targets = {1, 2};
  t.target_sigma = {1.0, 2.0};
  t.target_amplitude = {0.4, 0.8};
  t.clutter = ClutterSpec{8, {1.0, 2.5}, {0.3, 0.7}};
  t.background_level = {0.1, 0.3};
  t.noise_sigma = 10.0;
  return t;
}

SceneTemplate preset_template(const std::string& name) {
  if (name == "toy") return toy_template();
  if (name == "hard") return hard_template();
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy or hard)");
}

SceneSpec sample_scene_spec(const SceneTemplate& t, std::uint64_t seed) {
  t.validate();
  SplitMix64 rng(seed);
  SceneSpec s;
  s.hw = t.hw;
  const int count =
      t.num_targets[0] + static_cast<int>(rng.below(t.num_targets[1] - t.num_targets[0] + 1));
  for (int i = 0; i < count; ++i) {
    TargetSpec tg;
    tg.cx = rng.uniform(t.target_margin, t.hw - 1 - t.target_margin);
    tg.cy = rng.uniform(t.target_margin, t.hw - 1 - t.target_margin);
    tg.sigma = rng.uniform(t.target_sigma[0], t.target_sigma[1]);
    tg.amplitude = rng.uniform(t.target_amplitude[0], t.target_amplitude[1]);
    s.targets.push_back(tg);
  }
  s.clutter = t.clutter;
  s.background_level = rng.uniform(t.background_level[0], t.background_level[1]);
  s.noise_sigma = t.noise_sigma;
  s.rng_seed = rng.next();
  return s;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

std::string DatasetManifest::resolve(const std::string& rel) const {
  const fs::path p(rel);
  return p.is_absolute() ? rel : (fs::path(root) / p).string();
}

namespace {

std::string indexed(const char* stem, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.pgm", stem, i);
  return buf;
}

int train_count(int count, double ratio) {
  return static_cast<int>(std::lround(count * ratio));
}

}  // namespace

DatasetManifest build_manifest(const std::string& root, double split_ratio,
                               const SceneTemplate& tmpl, int count, std::uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("build_manifest: count must be positive");
  if (!(split_ratio >= 0 && split_ratio <= 1)) {
    throw std::invalid_argument("build_manifest: split ratio outside [0, 1]");
  }
  tmpl.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError(root + ": cannot create directory: " + ec.message());

  DatasetManifest m;
  m.root = root;
  m.spec = {{"template", tmpl}, {"count", count}, {"split_ratio", split_ratio}, {"seed", seed}};
  const int n_train = train_count(count, split_ratio);
  for (int i = 0; i < count; ++i) {
    const Scene s = synth_scene(sample_scene_spec(tmpl, derive_seed(seed, i)));
    ManifestEntry e{i < n_train ? "train" : "test", indexed("scene", i), indexed("mask", i)};
    write_pgm(s.image, m.resolve(e.image));
    write_pgm(s.mask, m.resolve(e.mask));
    m.entries.push_back(e);
  }

  std::ofstream tsv(m.resolve("manifest.tsv"), std::ios::trunc);
  for (const auto& e : m.entries) tsv << e.split << '\t' << e.image << '\t' << e.mask << '\n';
  if (!tsv) throw DataError(root + ": cannot write manifest.tsv");
  std::ofstream js(m.resolve("spec.json"), std::ios::trunc);
  js << m.spec.dump(2) << '\n';
  if (!js) throw DataError(root + ": cannot write spec.json");
  return m;
}

DatasetManifest read_manifest(const std::string& root) {
  DatasetManifest m;
  m.root = root;
  const std::string path = m.resolve("manifest.tsv");
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open manifest");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.split, '\t') || !std::getline(ls, e.image, '\t') ||
        !std::getline(ls, e.mask)) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    if (e.split != "train" && e.split != "test") {
      throw DataError(path + ":" + std::to_string(line_no) + ": unknown split '" + e.split + "'");
    }
    m.entries.push_back(e);
  }
  std::ifstream js(m.resolve("spec.json"));
  if (js) {
    try {
      js >> m.spec;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(m.resolve("spec.json") + ": " + e.what());
    }
  }
  return m;
}

std::vector<Scene> load_split(const DatasetManifest& m, const std::string& split) {
  std::vector<Scene> out;
  for (const auto& e : m.split(split)) {
    Scene s{read_pgm(m.resolve(e.image)), read_pgm(m.resolve(e.mask))};
    if (!(s.image.shape() == s.mask.shape())) {
      throw DataError(e.image + ": image " + s.image.shape().str() + " vs mask " +
                      s.mask.shape().str());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Scene> renoise_split(const DatasetManifest& m, const std::string& split,
                                 double noise_sigma) {
  if (!m.spec.contains("template")) {
    throw DataError(m.root + ": manifest has no generation echo (spec.json) to regenerate from");
  }
  const SceneTemplate tmpl = m.spec.at("template").get<SceneTemplate>();
  const int count = m.spec.at("count").get<int>();
  const double ratio = m.spec.at("split_ratio").get<double>();
  const std::uint64_t seed = m.spec.at("seed").get<std::uint64_t>();
  const int n_train = train_count(count, ratio);
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    if ((i < n_train ? "train" : "test") != split) continue;
    SceneSpec spec = sample_scene_spec(tmpl, derive_seed(seed, i));
    spec.noise_sigma = noise_sigma;
    Scene s = synth_scene(spec);
    s.image = quantize8(s.image);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fsg
