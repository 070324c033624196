#include "fsg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fsg/tape.hpp"

namespace fsg {

GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<Tensor<double>> params, double step,
                                  std::size_t max_entries_per_tensor) {
  for (auto& p : params) {
    p.zero_grad();
    p.set_requires_grad(true);
  }
  {
    Tape tape;
    Tensor<double> loss;
    {
      TapeScope scope(tape);
      loss = loss_fn();
    }
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].data();
    const std::size_t n = values.size();
    std::size_t count = n;
    if (max_entries_per_tensor > 0) count = std::min(n, max_entries_per_tensor);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : (k * n) / count;
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_fn().item();
      values[i] = saved - step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
      ++report.entries_checked;
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        report.worst_tensor = t;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace fsg
