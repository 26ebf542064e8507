// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "planet/numerics/rng.hpp"
#include "planet/numerics/tape.hpp"

namespace planet {

/// Weights drawn from U(-1/√fan_in, 1/√fan_in).
Tensor uniform_init(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// y = x·W + b with W ∈ R^{in×out}, b ∈ R^{1×out}. Bias starts at zero.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;  // null for bias-free projections

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);

  [[nodiscard]] std::size_t in_dim() const { return weight->value.rows(); }
  [[nodiscard]] std::size_t out_dim() const { return weight->value.cols(); }
  Var operator()(Tape& tape, const Var& x) const;
};

/// Two Linear layers with a ReLU between them.
struct Mlp2 {
  Linear first;
  Linear second;

  static Mlp2 create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     std::size_t out, Rng& rng);

  [[nodiscard]] std::size_t in_dim() const { return first.in_dim(); }
  [[nodiscard]] std::size_t out_dim() const { return second.out_dim(); }
  /// `dropout` is applied to the hidden activations when the tape is training.
  Var operator()(Tape& tape, const Var& x, double dropout = 0.0) const;
};

}  // namespace planet
