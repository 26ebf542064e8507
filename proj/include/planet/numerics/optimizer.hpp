// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planet/numerics/tape.hpp"

namespace planet {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig config);

  /// One update of every registered parameter. Throws ContractError if a
  /// parameter has no gradient buffer.
  void step();

  [[nodiscard]] const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  [[nodiscard]] std::uint64_t step_count() const { return step_; }

  /// First/second moment buffers, parallel to the parameter store order.
  [[nodiscard]] const std::vector<Tensor>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t step);

 private:
  ParameterStore* params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace planet
