// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "kinediff/nn.hpp"
#include "kinediff/rng.hpp"
#include "kinediff/tensor.hpp"

namespace testutil {

inline kinediff::Tensor random_tensor(std::vector<std::int64_t> shape, kinediff::Rng& rng,
                                      bool requires_grad = true, double lo = -1.0,
                                      double hi = 1.0) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return kinediff::Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// Central finite differences against the analytic gradient of a scalar loss
// rebuilt by `loss_fn` from the current leaf values. Returns the worst
// relative error over all checked elements.
inline double gradcheck(std::vector<kinediff::Tensor>& leaves,
                        const std::function<kinediff::Tensor()>& loss_fn,
                        double h = 1e-5, int max_per_leaf = 24) {
  using kinediff::backward;
  for (auto& l : leaves) l.zero_grad();
  kinediff::Tensor loss = loss_fn();
  backward(loss);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) analytic = leaf.grad();
    const std::int64_t n = leaf.size();
    const std::int64_t step = n <= max_per_leaf ? 1 : n / max_per_leaf;
    for (std::int64_t i = 0; i < n; i += step) {
      double* x = leaf.mutable_data();
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = loss_fn().item();
      x[i] = orig - h;
      const double fm = loss_fn().item();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic[i])});
      worst = std::max(worst, std::fabs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
