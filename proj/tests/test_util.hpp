// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "planet/numerics/rng.hpp"
#include "planet/numerics/tape.hpp"

namespace planet::testing {

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t({rows, cols});
  for (auto& x : t.data()) x = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline Tensor scale_copy(Tensor t, double s) {
  for (auto& x : t.data()) x *= s;
  return t;
}

/// Central finite differences of `f` at every entry of `inputs[k]`.
/// Evaluates the forward only; shares no code with backward rules.
inline std::vector<Tensor> numeric_gradients(std::vector<Tensor> inputs,
                                             const std::function<double(const std::vector<Tensor>&)>& f,
                                             double h = 1e-5) {
  std::vector<Tensor> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = f(inputs);
      inputs[k][i] = orig - h;
      const double down = f(inputs);
      inputs[k][i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// max over entries of |a-b| / max(|a|,|b|, floor)
inline double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Weighted-sum probe: loss = Σ w ⊙ out, with fixed random weights, so every
/// output entry contributes a distinct coefficient to the gradient.
inline double weighted_sum(const Tensor& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

/// Overwrites every parameter with U(-scale, scale) draws.
inline void randomize_params(ParameterStore& store, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto& p : store) {
    for (auto& v : p->value.data()) v = scale * rng.uniform(-1.0, 1.0);
  }
}

}  // namespace planet::testing
