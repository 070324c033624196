#pragma once

// Synthetic infrared scenes: Gaussian point targets over a flat background
// with Gaussian clutter blobs and additive white noise; half-peak target
// masks; flip / rotation augmentation; PGM datasets with a TSV manifest.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fsg/tensor.hpp"
#include "json.hpp"

namespace fsg {

struct TargetSpec {
  double cx = 0, cy = 0;  // pixel centres sit at integer coordinates
  double sigma = 1.0;     // 0.5 .. 2.0 px
  double amplitude = 1.0;
};

struct ClutterSpec {
  int num_blobs = 0;
  std::array<double, 2> blob_sigma{2.0, 4.0};
  std::array<double, 2> blob_amplitude{0.05, 0.2};
};

struct SceneSpec {
  int hw = 64;
  std::vector<TargetSpec> targets;
  ClutterSpec clutter;
  double background_level = 0.2;
  double noise_sigma = 0.0;  // gray levels on the 0..255 scale
  std::uint64_t rng_seed = 0;

  // Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const TargetSpec& t);
void from_json(const nlohmann::json& j, TargetSpec& t);
void to_json(nlohmann::json& j, const ClutterSpec& c);
void from_json(const nlohmann::json& j, ClutterSpec& c);
void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

struct Scene {
  Tensor<float> image;  // (1, 1, hw, hw) in [0, 1]
  Tensor<float> mask;   // (1, 1, hw, hw) in {0, 1}
};

// Clutter positions draw from derive_seed(rng_seed, 0), noise from
// derive_seed(rng_seed, 1). The mask marks pixels where some target's own
// Gaussian reaches half its amplitude.
Scene synth_scene(const SceneSpec& spec);

// Adds N(0, (sigma_n / 255)^2) per pixel and clamps to [0, 1].
Tensor<float> add_gaussian_noise(const Tensor<float>& image, double sigma_n, std::uint64_t seed);

// Horizontal flip, then vertical flip, then `quarter_turns` x 90 degrees
// counter-clockwise.
struct AugmentDraw {
  bool hflip = false;
  bool vflip = false;
  int quarter_turns = 0;

  bool identity() const { return !hflip && !vflip && quarter_turns == 0; }
};

AugmentDraw draw_augment(std::uint64_t seed);
Tensor<float> apply_augment(const Tensor<float>& t, const AugmentDraw& d);
Tensor<float> invert_augment(const Tensor<float>& t, const AugmentDraw& d);
std::pair<Tensor<float>, Tensor<float>> augment(const Tensor<float>& image,
                                                const Tensor<float>& mask, std::uint64_t seed);

// Distribution the dataset builder samples scenes from.
struct SceneTemplate {
  int hw = 64;
  std::array<int, 2> num_targets{1, 1};
  std::array<double, 2> target_sigma{1.0, 2.0};
  std::array<double, 2> target_amplitude{0.5, 0.9};
  double target_margin = 4.0;  // px kept clear of the frame edge
  ClutterSpec clutter;
  std::array<double, 2> background_level{0.1, 0.3};
  double noise_sigma = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SceneTemplate& t);
void from_json(const nlohmann::json& j, SceneTemplate& t);

// Single Gaussian target, a few faint broad clutter blobs, light noise.
SceneTemplate toy_template();
// Several bright clutter blobs at target scale and stronger noise.
SceneTemplate hard_template();
// "toy" or "hard"; throws std::invalid_argument otherwise.
SceneTemplate preset_template(const std::string& name);

SceneSpec sample_scene_spec(const SceneTemplate& t, std::uint64_t seed);

struct ManifestEntry {
  std::string split;  // "train" or "test"
  std::string image;  // paths as written in the manifest
  std::string mask;
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
  nlohmann::json spec;  // generation echo: template, count, ratio, seed

  std::vector<ManifestEntry> split(const std::string& name) const;
  // Entry path resolved against the manifest root.
  std::string resolve(const std::string& rel) const;
};

// Writes scene_XXXX.pgm / mask_XXXX.pgm, manifest.tsv and spec.json under
// root. Scene i uses derive_seed(seed, i); the first round(count * ratio)
// scenes form the train split.
DatasetManifest build_manifest(const std::string& root, double split_ratio,
                               const SceneTemplate& tmpl, int count, std::uint64_t seed);

// Reads <root>/manifest.tsv (and spec.json when present). Throws DataError.
DatasetManifest read_manifest(const std::string& root);

// Loads every entry of a split, checking image / mask dimensions agree.
std::vector<Scene> load_split(const DatasetManifest& m, const std::string& split);

// Regenerates the split's scenes from the manifest's generation echo with
// noise_sigma replaced, quantized to 8 bits like the files on disk.
std::vector<Scene> renoise_split(const DatasetManifest& m, const std::string& split,
                                 double noise_sigma);

}  // namespace fsg
