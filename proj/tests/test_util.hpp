#pragma once

#include <functional>
#include <vector>

#include "relnmt/tensor.hpp"

namespace relnmt::testing {

inline double rel_err(double a, double b) {
  const double scale = std::max({1e-4, std::abs(a), std::abs(b)});
  return std::abs(a - b) / scale;
}

// Central finite differences against the tape gradient. `loss_fn` must
// rebuild the graph from the given leaves on every call. Returns the
// worst relative error over all checked coordinates.
inline double finite_diff_check(std::vector<Tensor> leaves,
                                const std::function<Tensor()>& loss_fn,
                                double h = 1e-5, int max_coords_per_leaf = -1,
                                Rng* rng = nullptr) {
  for (auto& l : leaves) l.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    const Index n = leaf.size();
    std::vector<Index> coords;
    if (max_coords_per_leaf < 0 || n <= max_coords_per_leaf) {
      for (Index i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_leaf; ++i)
        coords.push_back(static_cast<Index>(rng->uniform_int(n)));
    }
    for (Index i : coords) {
      const double orig = leaf.value()[i];
      leaf.value()[i] = orig + h;
      const double lp = loss_fn().item();
      leaf.value()[i] = orig - h;
      const double lm = loss_fn().item();
      leaf.value()[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = leaf.has_grad() ? leaf.grad()[i] : 0.0;
      worst = std::max(worst, rel_err(fd, an));
    }
  }
  return worst;
}

}  // namespace relnmt::testing
