// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/optimizer.hpp"

#include <cmath>

#include "planet/numerics/errors.hpp"

namespace planet {

AdamW::AdamW(ParameterStore& params, AdamWConfig config) : params_(&params), config_(config) {
  if (config_.lr < 0 || config_.weight_decay < 0) throw ConfigError("adamw: lr and weight decay must be >= 0");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step() {
  if (m_.size() != params_->size()) throw ContractError("adamw: parameters registered after optimizer creation");
  for (std::size_t i = 0; i < params_->size(); ++i) {
    if (!(*params_)[i].grad) throw ContractError("adamw: missing gradient for parameter " + (*params_)[i].name);
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Parameter& p = (*params_)[i];
    auto theta = p.value.data();
    const auto g = p.grad->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= config_.lr * config_.weight_decay * theta[j];
      theta[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t step) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ContractError("adamw: restore size mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
      throw ContractError("adamw: restore shape mismatch for " + (*params_)[i].name);
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  step_ = step;
}

}  // namespace planet
