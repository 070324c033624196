#pragma once

// Optimization protocol: AdamW with decoupled weight decay, cosine
// learning-rate annealing stepped per optimizer step, seeded shuffling and
// flip / rotation augmentation, per-epoch evaluation and best-IoU
// checkpointing. Also the ablation harness and feature-map export.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsg/data.hpp"
#include "fsg/metrics.hpp"
#include "fsg/network.hpp"

namespace fsg {

// lr_min + 0.5 (lr0 - lr_min)(1 + cos(pi step / total)); lr0 when total is 0.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min);

struct AdamWOptions {
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter moments mirror the parameter shapes. Each step:
//   theta -= lr * wd * theta
//   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
class AdamW {
 public:
  AdamW(std::span<const Tensor<T>> params, AdamWOptions opt);

  // Reads each parameter's grad (zero if it has none).
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions opt_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 100;
  int batch = 8;
  double lr0 = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  double eval_threshold = 0.5;
  bool augment = true;
  double clip = 0.0;  // global grad-norm clip; 0 disables

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  int epoch;
  double lr;
  double train_loss;
  MetricsReport test;
};

struct TrainResult {
  Fsgnet<float> net;  // state after the last epoch
  std::vector<EpochLog> log;
  double best_iou = -1;
  int best_epoch = -1;
};

// Trains from scratch. When out_dir is non-empty writes train_log.csv,
// best.fsgn and last.fsgn there. `progress`, when given, receives one line
// per epoch.
TrainResult train(const TrainConfig& cfg, const FsgnetConfig& net_cfg,
                  const std::vector<Scene>& train_set, const std::vector<Scene>& test_set,
                  const std::string& out_dir = "", std::ostream* progress = nullptr);

void write_train_log(std::ostream& os, const std::vector<EpochLog>& log, double clip);

// Stacks scenes [begin, end) into (n, 1, h, w) image and mask tensors.
std::pair<Tensor<float>, Tensor<float>> make_batch(const std::vector<Scene>& scenes,
                                                   std::size_t begin, std::size_t end);

struct EvalResult {
  MetricsAccumulator metrics;
  std::vector<Tensor<float>> preds;  // one (1, 1, h, w) map per scene
  std::vector<Tensor<float>> masks;
};

// Eval-mode forward over all scenes.
EvalResult evaluate(Fsgnet<float>& net, const std::vector<Scene>& scenes, double threshold,
                    int batch = 8);

// --- Ablation harness ------------------------------------------------------

struct AblationRow {
  std::string strategy;  // "(a)", "(b)", ...
  std::vector<bool> marks;
  FsgnetConfig cfg;
};

struct AblationTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<AblationRow> rows;
};

// "tableIV", "tableV", "tableVI" or "tableVII"; rows derive from `base`.
AblationTable ablation_table(const std::string& name, const FsgnetConfig& base);
std::vector<std::string> ablation_table_names();

struct AblationResult {
  AblationRow row;
  std::vector<double> iou, niou;  // per seed
};

// Trains every row once per seed (train seed replaced by each entry of
// `seeds`) and writes the comparison CSV when csv is non-null. Dry-run
// forces one epoch.
std::vector<AblationResult> ablate(const AblationTable& table, const std::vector<std::uint64_t>& seeds,
                                   TrainConfig train_cfg, const std::vector<Scene>& train_set,
                                   const std::vector<Scene>& test_set, bool dry_run,
                                   std::ostream* csv, std::ostream* progress = nullptr);

void write_ablation_csv(std::ostream& os, const AblationTable& table,
                        const std::vector<AblationResult>& results);

// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
std::pair<double, double> mean_std(const std::vector<double>& v);

// --- Feature maps ------------------------------------------------------------

// Channel mean of sample 0, min-max normalized to [0, 1]. A map with zero
// dynamic range becomes 0.5 everywhere.
Tensor<float> feature_map_image(const Tensor<float>& activation);

// Runs an eval forward on `image` (1, 1, H, W) and writes <dir>/<name>.pgm
// for every requested tap. Unknown names throw std::invalid_argument listing
// the valid ones. Returns the written paths.
std::vector<std::string> export_feature_maps(Fsgnet<float>& net, const Tensor<float>& image,
                                             const std::vector<std::string>& names,
                                             const std::string& dir);

}  // namespace fsg
