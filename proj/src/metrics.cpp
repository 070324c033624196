#include "fsg/metrics.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include "fsg/errors.hpp"
#include "fsg/ops.hpp"
#include "fsg/tape.hpp"

namespace fsg {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined input");
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": " + a.shape().str() + " vs " + b.shape().str());
  }
}

bool is_target(double g) { return g > 0.5; }

}  // namespace

template <typename T>
Tensor<T> soft_iou_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_same_shape(pred, gt, "soft_iou_loss");
  const auto p = pred.data();
  const auto g = gt.data();
  double inter = 0, sum_p = 0, sum_g = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += double(p[i]) * double(g[i]);
    sum_p += p[i];
    sum_g += g[i];
  }
  const double num = inter + kSoftIouEps;
  const double den = sum_p + sum_g - inter + kSoftIouEps;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(1.0 - num / den));
  check_finite(out, "soft_iou_loss");
  if (detail::should_record(pred)) {
    out.set_requires_grad(true);
    Tape::active()->record("soft_iou_loss", [pred, gt, out, num, den]() {
      if (!out.has_grad()) return;
      const double up = out.grad()[0];
      const auto g = gt.data();
      auto dp = pred.grad();
      const double inv_den2 = 1.0 / (den * den);
      // dI/dp = g, dU/dp = 1 - g.
      for (std::size_t i = 0; i < dp.size(); ++i) {
        const double gi = g[i];
        dp[i] += static_cast<T>(-up * (gi * den - num * (1.0 - gi)) * inv_den2);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& o_final, const Tensor<T>& aux, const Tensor<T>& gt) {
  Tensor<T> loss = soft_iou_loss(o_final, gt);
  if (aux.defined()) loss = add(loss, soft_iou_loss(aux, gt));
  return loss;
}

template <typename T>
Confusion pixel_confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
  require_same_shape(pred, gt, "pixel_confusion");
  Confusion c;
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pos = double(p[i]) >= threshold;
    const bool tgt = is_target(g[i]);
    if (pos && tgt) {
      ++c.tp;
    } else if (pos) {
      ++c.fp;
    } else if (tgt) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

template <typename T>
void MetricsAccumulator::add(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
  require_same_shape(pred, gt, "MetricsAccumulator::add");
  const Shape s = pred.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    const Shape one{1, s.c, s.h, s.w};
    const auto p = pred.data().subspan(n * per, per);
    const auto g = gt.data().subspan(n * per, per);
    Tensor<T> pn(one, std::vector<T>(p.begin(), p.end()));
    Tensor<T> gn(one, std::vector<T>(g.begin(), g.end()));
    add_sample(pixel_confusion(pn, gn, threshold));
  }
}

void MetricsAccumulator::add_sample(const Confusion& c) {
  totals_.tp += c.tp;
  totals_.fp += c.fp;
  totals_.tn += c.tn;
  totals_.fn += c.fn;
  samples_.push_back({c.tp, c.tp + c.fn, c.tp + c.fp});
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  totals_.tp += other.totals_.tp;
  totals_.fp += other.totals_.fp;
  totals_.tn += other.totals_.tn;
  totals_.fn += other.totals_.fn;
  samples_.insert(samples_.end(), other.samples_.begin(), other.samples_.end());
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.n_samples = samples_.size();
  const Confusion& c = totals_;

  const std::uint64_t uni = (c.tp + c.fn) + (c.tp + c.fp) - c.tp;
  r.iou_degenerate = uni == 0;
  r.iou = uni == 0 ? 0.0 : double(c.tp) / double(uni);

  double sum = 0;
  for (const Sample& s : samples_) {
    const std::uint64_t u = s.t + s.p - s.tp;
    if (u == 0) {
      ++r.empty_samples;
      sum += 1.0;
    } else {
      sum += double(s.tp) / double(u);
    }
  }
  r.niou = samples_.empty() ? 0.0 : sum / double(samples_.size());

  r.pd_degenerate = c.tp + c.fn == 0;
  r.pd = r.pd_degenerate ? 0.0 : double(c.tp) / double(c.tp + c.fn);
  r.fa_degenerate = c.fp + c.tn == 0;
  r.fa = r.fa_degenerate ? 0.0 : double(c.fp) / double(c.fp + c.tn);
  return r;
}

double MetricsAccumulator::iou() const { return report().iou; }
double MetricsAccumulator::niou() const { return report().niou; }
double MetricsAccumulator::pd() const { return report().pd; }
double MetricsAccumulator::fa() const { return report().fa; }

template <typename T>
RocCurve roc_curve(std::span<const Tensor<T>> preds, std::span<const Tensor<T>> gts,
                   std::span<const double> thresholds) {
  if (preds.size() != gts.size()) throw ShapeError("roc_curve: preds / gts count mismatch");
  if (thresholds.empty()) throw std::invalid_argument("roc_curve: empty threshold grid");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw std::invalid_argument("roc_curve: thresholds must be strictly decreasing");
    }
  }
  // Sorted scores per class; the count >= t is then one binary search.
  std::vector<double> pos, neg;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    require_same_shape(preds[k], gts[k], "roc_curve");
    const auto p = preds[k].data();
    const auto g = gts[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) (is_target(g[i]) ? pos : neg).push_back(p[i]);
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const auto at_least = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  };
  RocCurve curve;
  for (double t : thresholds) {
    const double tpr = pos.empty() ? 0.0 : at_least(pos, t) / double(pos.size());
    const double fpr = neg.empty() ? 0.0 : at_least(neg, t) / double(neg.size());
    curve.points.push_back({t, tpr, fpr});
  }
  return curve;
}

std::vector<double> roc_grid(int n) {
  if (n < 2) throw std::invalid_argument("roc_grid: need at least 2 points");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = 1.0 - double(i) / double(n - 1);
  return g;
}

void write_metrics_csv_header(std::ostream& os) { os << "iou,niou,pd,fa_e6,n_samples\n"; }

void write_metrics_csv_row(std::ostream& os, const MetricsReport& r) {
  const auto old = os.precision(10);
  os << r.iou << ',' << r.niou << ',' << r.pd << ',' << r.fa_e6() << ',' << r.n_samples << '\n';
  os.precision(old);
}

void write_roc_csv(std::ostream& os, const RocCurve& curve) {
  const auto old = os.precision(10);
  os << "threshold,tpr,fpr\n";
  for (const RocPoint& p : curve.points) os << p.threshold << ',' << p.tpr << ',' << p.fpr << '\n';
  os.precision(old);
}

#define FSG_INSTANTIATE(T)                                                                   \
  template Tensor<T> soft_iou_loss(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Confusion pixel_confusion(const Tensor<T>&, const Tensor<T>&, double);            \
  template void MetricsAccumulator::add(const Tensor<T>&, const Tensor<T>&, double);         \
  template RocCurve roc_curve(std::span<const Tensor<T>>, std::span<const Tensor<T>>,        \
                              std::span<const double>);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg
