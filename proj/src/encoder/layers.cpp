// SPDX-License-Identifier: Apache-2.0
#include "planet/encoder/layers.hpp"

#include <cmath>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

Tensor uniform_init(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0) throw ConfigError("uniform_init: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  Rng local = rng.stream(name);
  l.weight = &store.add(name + "/W", uniform_init(local, in, out));
  if (with_bias) l.bias = &store.add(name + "/b", Tensor::zeros(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("linear " + weight->name + ": input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(in_dim()));
  }
  Var y = matmul(x, tape.parameter(*weight));
  if (bias != nullptr) y = add_row(y, tape.parameter(*bias));
  return y;
}

Mlp2 Mlp2::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                  Rng& rng) {
  Mlp2 m;
  m.first = Linear::create(store, name + "/l1", in, hidden, rng);
  m.second = Linear::create(store, name + "/l2", hidden, out, rng);
  return m;
}

Var Mlp2::operator()(Tape& tape, const Var& x, double dropout_p) const {
  Var hidden = relu(first(tape, x));
  if (dropout_p > 0.0) hidden = dropout(hidden, dropout_p);
  return second(tape, hidden);
}

}  // namespace planet
