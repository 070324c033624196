#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "fsg/tensor.hpp"

namespace fsg {

struct GradCheckReport {
  // max over checked entries of |analytic - numeric| / max(1, |numeric|)
  double max_rel_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

// Compares tape gradients of `loss_fn` against central differences.
//
// loss_fn must rebuild the whole computation from `params` on every call
// and return a scalar; it is invoked once under a tape and twice per
// checked entry without one. Keep it deterministic (batch norm in eval
// mode). When max_entries_per_tensor is non-zero, larger tensors are
// probed at that many evenly spaced positions. Reports, never asserts.
GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<Tensor<double>> params, double step = 1e-4,
                                  std::size_t max_entries_per_tensor = 0);

}  // namespace fsg
