// fsgnet: data generation, training, evaluation, ablation and feature-map
// export. Exit codes: 0 ok, 1 usage, 2 data / IO, 3 numeric failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsg/checkpoint.hpp"
#include "fsg/data.hpp"
#include "fsg/errors.hpp"
#include "fsg/pgm.hpp"
#include "fsg/train.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fsg::DataError(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw fsg::DataError(path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw fsg::DataError(path + ": cannot open for writing");
  return out;
}

// Network flags shared by train and ablate.
struct NetOptions {
  std::string config_file;
  int input_hw = 0;
  int gsgf_count = -1;
  bool no_miam = false, no_mfm = false, no_gpm = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--net-config", config_file, "network config JSON");
    cmd->add_option("--input-hw", input_hw, "input resolution (power of two)");
    cmd->add_option("--gsgf-count", gsgf_count, "number of guidance links, 0..4");
    cmd->add_flag("--no-miam", no_miam, "plain residual encoder blocks");
    cmd->add_flag("--no-mfm", no_mfm, "identity skip connections");
    cmd->add_flag("--no-gpm", no_gpm, "plain conv bottleneck (implies --gsgf-count 0)");
  }

  fsg::FsgnetConfig resolve() const {
    fsg::FsgnetConfig c;
    if (!config_file.empty()) c = read_json(config_file).get<fsg::FsgnetConfig>();
    if (input_hw > 0) c.input_hw = input_hw;
    if (no_miam) c.use_miam = false;
    if (no_mfm) c.use_mfm = false;
    if (no_gpm) {
      c.use_gpm = false;
      c.gsgf_count = 0;
    }
    if (gsgf_count >= 0) c.gsgf_count = gsgf_count;
    return c;
  }
};

struct TrainOptions {
  std::string config_file;
  fsg::TrainConfig cfg;
  bool no_augment = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--train-config", config_file, "training config JSON");
    cmd->add_option("--epochs", cfg.epochs);
    cmd->add_option("--batch", cfg.batch);
    cmd->add_option("--lr0", cfg.lr0);
    cmd->add_option("--lr-min", cfg.lr_min);
    cmd->add_option("--weight-decay", cfg.weight_decay);
    cmd->add_option("--seed", cfg.seed);
    cmd->add_option("--eval-threshold", cfg.eval_threshold);
    cmd->add_option("--clip", cfg.clip, "global grad-norm clip, 0 = off");
    cmd->add_flag("--no-augment", no_augment);
  }

  // Command-line values override the file only when given explicitly.
  fsg::TrainConfig resolve(CLI::App* cmd) const {
    fsg::TrainConfig c = cfg;
    if (!config_file.empty()) {
      c = read_json(config_file).get<fsg::TrainConfig>();
      const auto over = [cmd](const char* flag, auto& dst, const auto& src) {
        if (cmd->count(flag) > 0) dst = src;
      };
      over("--epochs", c.epochs, cfg.epochs);
      over("--batch", c.batch, cfg.batch);
      over("--lr0", c.lr0, cfg.lr0);
      over("--lr-min", c.lr_min, cfg.lr_min);
      over("--weight-decay", c.weight_decay, cfg.weight_decay);
      over("--seed", c.seed, cfg.seed);
      over("--eval-threshold", c.eval_threshold, cfg.eval_threshold);
      over("--clip", c.clip, cfg.clip);
    }
    if (no_augment) c.augment = false;
    return c;
  }
};

std::vector<fsg::Scene> test_scenes(const fsg::DatasetManifest& m, double noise_sigma) {
  return noise_sigma >= 0 ? fsg::renoise_split(m, "test", noise_sigma) : fsg::load_split(m, "test");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infrared small-target segmentation: data, training, evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  std::string gen_out, gen_preset = "toy", gen_spec;
  int gen_count = 160, gen_hw = 0;
  double gen_ratio = 0.8, gen_noise = -1;
  std::uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--preset", gen_preset, "toy or hard");
  gen->add_option("--spec", gen_spec, "scene template JSON (overrides --preset)");
  gen->add_option("--count", gen_count);
  gen->add_option("--split-ratio", gen_ratio);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--hw", gen_hw, "resolution override");
  gen->add_option("--noise-sigma", gen_noise, "noise override, gray levels");

  // train
  auto* tr = app.add_subcommand("train", "train a network on a dataset");
  std::string tr_data, tr_out;
  NetOptions tr_net;
  TrainOptions tr_opt;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "run directory")->required();
  tr_net.add(tr);
  tr_opt.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_data, ev_out, ev_roc;
  double ev_threshold = 0.5, ev_noise = -1;
  int ev_roc_points = 101;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--threshold", ev_threshold);
  ev->add_option("--out", ev_out, "metrics CSV (stdout when omitted)");
  ev->add_option("--roc", ev_roc, "write ROC CSV here");
  ev->add_option("--roc-points", ev_roc_points);
  ev->add_option("--noise-sigma", ev_noise, "regenerate the test split at this noise level");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train every row of an ablation table");
  std::string ab_data, ab_rows = "tableIV", ab_out;
  std::vector<std::uint64_t> ab_seeds{1, 2, 3};
  bool ab_dry = false;
  NetOptions ab_net;
  TrainOptions ab_opt;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--rows", ab_rows, "tableIV, tableV, tableVI or tableVII");
  ab->add_option("--seeds", ab_seeds)->delimiter(',');
  ab->add_option("--out", ab_out, "comparison CSV (stdout when omitted)");
  ab->add_flag("--dry-run", ab_dry, "one epoch per run");
  ab_net.add(ab);
  ab_opt.add(ab);

  // export-maps
  auto* ex = app.add_subcommand("export-maps", "write channel-mean feature maps as PGM");
  std::string ex_ckpt, ex_image, ex_out;
  std::vector<std::string> ex_layers{"mfm.0.in", "mfm.0.out"};
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--image", ex_image, "input PGM")->required();
  ex->add_option("--layers", ex_layers, "comma-separated tap names")->delimiter(',');
  ex->add_option("--out", ex_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) {
      fsg::SceneTemplate t = gen_spec.empty() ? fsg::preset_template(gen_preset)
                                              : read_json(gen_spec).get<fsg::SceneTemplate>();
      if (gen_hw > 0) t.hw = gen_hw;
      if (gen_noise >= 0) t.noise_sigma = gen_noise;
      const auto m = fsg::build_manifest(gen_out, gen_ratio, t, gen_count, gen_seed);
      std::cout << "wrote " << m.entries.size() << " scenes (" << m.split("train").size()
                << " train, " << m.split("test").size() << " test) to " << gen_out << '\n';
    } else if (*tr) {
      const auto m = fsg::read_manifest(tr_data);
      const fsg::FsgnetConfig net_cfg = tr_net.resolve();
      const fsg::TrainConfig cfg = tr_opt.resolve(tr);
      const auto result = fsg::train(cfg, net_cfg, fsg::load_split(m, "train"),
                                     fsg::load_split(m, "test"), tr_out, &std::cout);
      std::cout << "best iou " << result.best_iou << " at epoch " << result.best_epoch << '\n';
    } else if (*ev) {
      fsg::Fsgnet<float> net = fsg::load_checkpoint(ev_ckpt);
      const auto m = fsg::read_manifest(ev_data);
      const auto r = fsg::evaluate(net, test_scenes(m, ev_noise), ev_threshold);
      if (ev_out.empty()) {
        fsg::write_metrics_csv_header(std::cout);
        fsg::write_metrics_csv_row(std::cout, r.metrics.report());
      } else {
        auto out = open_out(ev_out);
        fsg::write_metrics_csv_header(out);
        fsg::write_metrics_csv_row(out, r.metrics.report());
      }
      if (!ev_roc.empty()) {
        std::vector<double> grid = fsg::roc_grid(ev_roc_points);
        const auto curve = fsg::roc_curve<float>(r.preds, r.masks, grid);
        auto out = open_out(ev_roc);
        fsg::write_roc_csv(out, curve);
      }
    } else if (*ab) {
      const auto m = fsg::read_manifest(ab_data);
      const auto table = fsg::ablation_table(ab_rows, ab_net.resolve());
      const auto train_set = fsg::load_split(m, "train");
      const auto test_set = fsg::load_split(m, "test");
      if (ab_out.empty()) {
        fsg::ablate(table, ab_seeds, ab_opt.resolve(ab), train_set, test_set, ab_dry, &std::cout,
                    &std::cerr);
      } else {
        auto out = open_out(ab_out);
        fsg::ablate(table, ab_seeds, ab_opt.resolve(ab), train_set, test_set, ab_dry, &out,
                    &std::cerr);
      }
    } else if (*ex) {
      fsg::Fsgnet<float> net = fsg::load_checkpoint(ex_ckpt);
      const auto paths = fsg::export_feature_maps(net, fsg::read_pgm(ex_image), ex_layers, ex_out);
      for (const auto& p : paths) std::cout << p << '\n';
    }
  } catch (const fsg::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fsg::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
