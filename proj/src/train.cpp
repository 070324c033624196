#include "fsg/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fsg/checkpoint.hpp"
#include "fsg/errors.hpp"
#include "fsg/pgm.hpp"
#include "fsg/tape.hpp"

namespace fsg {

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps <= 0) return lr0;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename T>
AdamW<T>::AdamW(std::span<const Tensor<T>> params, AdamWOptions opt)
    : params_(params.begin(), params.end()), opt_(opt) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * opt_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto theta = params_[k].data();
    const bool has_grad = params_[k].has_grad();
    const std::span<T> g = has_grad ? params_[k].grad() : std::span<T>();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
      double th = static_cast<double>(theta[i]) * decay;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      th -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
      theta[i] = static_cast<T>(th);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(lr0 > 0) || !(lr_min >= 0) || lr_min > lr0) {
    throw std::invalid_argument("need 0 <= lr_min <= lr0 and lr0 > 0");
  }
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("betas must lie in [0, 1)");
  }
  if (clip < 0) throw std::invalid_argument("clip must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch", c.batch},
       {"lr0", c.lr0},               {"lr_min", c.lr_min},
       {"weight_decay", c.weight_decay}, {"betas", {c.beta1, c.beta2}},
       {"seed", c.seed},             {"eval_threshold", c.eval_threshold},
       {"augment", c.augment},       {"clip", c.clip}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("epochs", c.epochs);
  get("batch", c.batch);
  get("lr0", c.lr0);
  get("lr_min", c.lr_min);
  get("weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  get("seed", c.seed);
  get("eval_threshold", c.eval_threshold);
  get("augment", c.augment);
  get("clip", c.clip);
}

std::pair<Tensor<float>, Tensor<float>> make_batch(const std::vector<Scene>& scenes,
                                                   std::size_t begin, std::size_t end) {
  if (begin >= end || end > scenes.size()) throw std::out_of_range("make_batch: bad range");
  const Shape one = scenes[begin].image.shape();
  const int n = static_cast<int>(end - begin);
  Tensor<float> x(Shape{n, 1, one.h, one.w});
  Tensor<float> y(Shape{n, 1, one.h, one.w});
  const std::size_t plane = one.plane();
  for (std::size_t k = begin; k < end; ++k) {
    const Scene& s = scenes[k];
    if (!(s.image.shape() == one) || !(s.mask.shape() == one)) {
      throw DataError("make_batch: scene " + std::to_string(k) + " has shape " +
                      s.image.shape().str() + ", expected " + one.str());
    }
    std::copy_n(s.image.data().begin(), plane, x.data().begin() + (k - begin) * plane);
    std::copy_n(s.mask.data().begin(), plane, y.data().begin() + (k - begin) * plane);
  }
  return {x, y};
}

namespace {

void check_resolution(const std::vector<Scene>& scenes, int hw, const char* which) {
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Shape s = scenes[i].image.shape();
    if (s.n != 1 || s.c != 1 || s.h != hw || s.w != hw) {
      throw DataError(std::string(which) + " scene " + std::to_string(i) + " is " + s.str() +
                      ", network expects 1x1x" + std::to_string(hw) + "x" + std::to_string(hw));
    }
  }
}

// Splits a (n, 1, h, w) tensor into n single-image tensors.
std::vector<Tensor<float>> unstack(const Tensor<float>& t) {
  const Shape s = t.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  std::vector<Tensor<float>> out;
  for (int k = 0; k < s.n; ++k) {
    const auto src = t.data().subspan(k * per, per);
    out.emplace_back(Shape{1, s.c, s.h, s.w}, std::vector<float>(src.begin(), src.end()));
  }
  return out;
}

void clip_grad_norm(std::span<Tensor<float>> params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float f = static_cast<float>(max_norm / norm);
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float& g : p.grad()) g *= f;
  }
}

constexpr std::uint64_t kShuffleStream = 1'000'000;
constexpr std::uint64_t kAugmentStream = 2'000'000;

}  // namespace

EvalResult evaluate(Fsgnet<float>& net, const std::vector<Scene>& scenes, double threshold,
                    int batch) {
  if (batch < 1) throw std::invalid_argument("evaluate: batch must be >= 1");
  check_resolution(scenes, net.cfg.input_hw, "test");
  EvalResult r;
  for (std::size_t b = 0; b < scenes.size(); b += batch) {
    const std::size_t e = std::min(scenes.size(), b + batch);
    auto [x, y] = make_batch(scenes, b, e);
    const FsgnetOutput<float> out = net.forward(x, Mode::kEval);
    r.metrics.add(out.o_final, y, threshold);
    for (auto& p : unstack(out.o_final)) r.preds.push_back(std::move(p));
    for (auto& m : unstack(y)) r.masks.push_back(std::move(m));
  }
  return r;
}

void write_train_log(std::ostream& os, const std::vector<EpochLog>& log, double clip) {
  os << "epoch,lr,train_loss,iou,niou,pd,fa_e6";
  if (clip > 0) os << ",clip";
  os << '\n';
  const auto old = os.precision(10);
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.test.iou << ','
       << e.test.niou << ',' << e.test.pd << ',' << e.test.fa_e6();
    if (clip > 0) os << ',' << clip;
    os << '\n';
  }
  os.precision(old);
}

TrainResult train(const TrainConfig& cfg, const FsgnetConfig& net_cfg,
                  const std::vector<Scene>& train_set, const std::vector<Scene>& test_set,
                  const std::string& out_dir, std::ostream* progress) {
  cfg.validate();
  net_cfg.validate();
  if (train_set.empty()) throw DataError("train: empty train split");
  check_resolution(train_set, net_cfg.input_hw, "train");
  check_resolution(test_set, net_cfg.input_hw, "test");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainResult r;
  r.net = build_network<float>(net_cfg, cfg.seed);
  std::vector<Tensor<float>> params = collect(r.net).param_tensors();
  AdamW<float> opt(params, {cfg.weight_decay, cfg.beta1, cfg.beta2, 1e-8});

  const std::size_t n = train_set.size();
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + cfg.batch - 1) / cfg.batch);
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
  std::int64_t step = 0;
  std::vector<std::size_t> order(n);
  std::vector<Scene> batch_scenes;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, kShuffleStream + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    const std::uint64_t aug_seed = derive_seed(cfg.seed, kAugmentStream + epoch);

    double loss_sum = 0;
    double lr = cfg.lr0;
    for (std::size_t b = 0; b < n; b += cfg.batch) {
      const std::size_t e = std::min(n, b + cfg.batch);
      batch_scenes.clear();
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t idx = order[k];
        const Scene& s = train_set[idx];
        if (cfg.augment) {
          auto [img, msk] = augment(s.image, s.mask, derive_seed(aug_seed, idx));
          batch_scenes.push_back({img, msk});
        } else {
          batch_scenes.push_back(s);
        }
      }
      auto [x, y] = make_batch(batch_scenes, 0, batch_scenes.size());

      Tape tape;
      Tensor<float> loss;
      {
        TapeScope scope(tape);
        const FsgnetOutput<float> out = r.net.forward(x, Mode::kTrain);
        loss = total_loss(out.o_final, out.aux, y);
      }
      tape.backward(loss, std::span<Tensor<float>>(params));
      if (cfg.clip > 0) clip_grad_norm(params, cfg.clip);
      lr = cosine_lr(step, total_steps, cfg.lr0, cfg.lr_min);
      opt.step(lr);
      ++step;
      for (const auto& p : params) p.zero_grad();
      loss_sum += loss.item();
    }

    EpochLog row{epoch, lr, loss_sum / static_cast<double>(steps_per_epoch), {}};
    if (!test_set.empty()) {
      row.test = evaluate(r.net, test_set, cfg.eval_threshold, cfg.batch).metrics.report();
    }
    r.log.push_back(row);
    if (!test_set.empty() && row.test.iou > r.best_iou) {
      r.best_iou = row.test.iou;
      r.best_epoch = epoch;
      if (!out_dir.empty()) save_checkpoint(r.net, out_dir + "/best.fsgn");
    }
    if (progress) {
      *progress << "epoch " << epoch << '/' << cfg.epochs << std::fixed << std::setprecision(6)
                << " lr=" << lr << " loss=" << row.train_loss << " iou=" << row.test.iou
                << " niou=" << row.test.niou << " pd=" << row.test.pd
                << " fa_e6=" << row.test.fa_e6() << std::defaultfloat << '\n'
                << std::flush;
    }
  }

  if (!out_dir.empty()) {
    save_checkpoint(r.net, out_dir + "/last.fsgn");
    std::ofstream log(out_dir + "/train_log.csv", std::ios::trunc);
    write_train_log(log, r.log, cfg.clip);
    if (!log) throw DataError(out_dir + "/train_log.csv: write failed");
  }
  return r;
}

Tensor<float> feature_map_image(const Tensor<float>& activation) {
  const Shape s = activation.shape();
  Tensor<float> out(Shape{1, 1, s.h, s.w});
  auto d = out.data();
  const auto a = activation.data();
  const std::size_t plane = s.plane();
  std::vector<double> mean(plane, 0.0);
  for (int c = 0; c < s.c; ++c) {
    for (std::size_t i = 0; i < plane; ++i) mean[i] += a[c * plane + i];
  }
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    mean[i] /= s.c;
    lo = i == 0 ? mean[i] : std::min(lo, mean[i]);
    hi = i == 0 ? mean[i] : std::max(hi, mean[i]);
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < plane; ++i) {
    d[i] = range > 0 ? static_cast<float>((mean[i] - lo) / range) : 0.5f;
  }
  return out;
}

std::vector<std::string> export_feature_maps(Fsgnet<float>& net, const Tensor<float>& image,
                                             const std::vector<std::string>& names,
                                             const std::string& dir) {
  const std::vector<std::string> valid = tap_names();
  for (const auto& name : names) {
    if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
      std::string list;
      for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
      throw std::invalid_argument("unknown layer '" + name + "'; valid layers: " + list);
    }
  }
  FeatureTaps<float> taps;
  net.forward(image, Mode::kEval, &taps);
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& name : names) {
    const std::string path = (std::filesystem::path(dir) / (name + ".pgm")).string();
    write_pgm(feature_map_image(taps.at(name)), path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace fsg
