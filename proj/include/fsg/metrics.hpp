#pragma once

// Soft-IoU loss and pixel-level evaluation metrics.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fsg/tensor.hpp"

namespace fsg {

inline constexpr double kSoftIouEps = 1e-6;

// 1 - (sum p*g + eps) / (sum p + sum g - sum p*g + eps), over the whole
// tensor. Differentiable in pred only; gt is treated as a constant.
template <typename T>
Tensor<T> soft_iou_loss(const Tensor<T>& pred, const Tensor<T>& gt);

// soft_iou(o_final) + soft_iou(aux); aux may be undefined (no GPM).
template <typename T>
Tensor<T> total_loss(const Tensor<T>& o_final, const Tensor<T>& aux, const Tensor<T>& gt);

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

// pred >= threshold counts as positive; gt > 0.5 counts as target.
template <typename T>
Confusion pixel_confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold);

struct MetricsReport {
  double iou = 0, niou = 0, pd = 0, fa = 0;
  std::uint64_t n_samples = 0;
  // Set when the corresponding denominator was zero and the value was
  // defined by convention (0 for iou / pd / fa).
  bool iou_degenerate = false, pd_degenerate = false, fa_degenerate = false;
  // Samples with neither target nor prediction, counted as IoU 1 in nIoU.
  std::uint64_t empty_samples = 0;

  double fa_e6() const { return fa * 1e6; }
};

class MetricsAccumulator {
 public:
  struct Sample {
    std::uint64_t tp = 0, t = 0, p = 0;
  };

  // Adds every sample of an (n, 1, h, w) batch.
  template <typename T>
  void add(const Tensor<T>& pred, const Tensor<T>& gt, double threshold);
  void add_sample(const Confusion& c);

  // Associative and commutative up to sample order, which nIoU ignores.
  void merge(const MetricsAccumulator& other);

  const Confusion& totals() const { return totals_; }
  const std::vector<Sample>& samples() const { return samples_; }

  double iou() const;
  double niou() const;
  double pd() const;
  double fa() const;
  MetricsReport report() const;

 private:
  Confusion totals_;
  std::vector<Sample> samples_;
};

struct RocPoint {
  double threshold, tpr, fpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

// Pixel-level TPR / FPR over all pairs at each threshold. Thresholds must
// be strictly decreasing; throws std::invalid_argument otherwise.
template <typename T>
RocCurve roc_curve(std::span<const Tensor<T>> preds, std::span<const Tensor<T>> gts,
                   std::span<const double> thresholds);

// 1, 1 - 1/(n-1), ..., 0.
std::vector<double> roc_grid(int n);

void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(std::ostream& os, const MetricsReport& r);
void write_roc_csv(std::ostream& os, const RocCurve& curve);

}  // namespace fsg
