// SPDX-License-Identifier: Apache-2.0
#include "planet/edg/edg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

Var build_complement(const std::vector<Var>& states, std::size_t target) {
  if (states.size() < 2) throw ContractError("edg: complement needs at least two modalities");
  if (target >= states.size()) throw ContractError("edg: target modality out of range");
  std::vector<Var> parts;
  parts.reserve(states.size() - 1);
  for (std::size_t m = 0; m < states.size(); ++m) {
    if (m != target) parts.push_back(states[m]);
  }
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

ExpertBank ExpertBank::create(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t dim,
                              std::size_t num_experts, std::size_t k_top, Rng& rng) {
  if (num_experts == 0) throw ConfigError("edg: need at least one expert");
  if (k_top < 1 || k_top > num_experts) {
    throw ConfigError("edg: top_k " + std::to_string(k_top) + " outside [1, " + std::to_string(num_experts) + "]");
  }
  ExpertBank b;
  b.k_top = k_top;
  for (std::size_t k = 0; k < num_experts; ++k) {
    b.experts.push_back(Mlp2::create(store, name + "/expert" + std::to_string(k), in_dim, dim, dim, rng));
  }
  b.gate = Mlp2::create(store, name + "/gate", in_dim, dim, num_experts, rng);
  return b;
}

Var top_k_softmax(const Var& logits, std::size_t k) {
  const Tensor& x = logits.value();
  const std::size_t n = x.rows();
  const std::size_t kk = x.cols();
  if (k < 1 || k > kk) throw ConfigError("edg: top_k outside [1, K]");
  Tape& tape = logits.tape();

  // Selection is discrete; it is frozen so finite-difference replays see the same experts.
  std::vector<std::size_t> chosen(n * kk, 0);
  {
    std::vector<std::size_t> order(kk);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(i);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
      for (std::size_t t = 0; t < k; ++t) chosen[i * kk + order[t]] = 1;
    }
  }
  chosen = tape.freeze(std::move(chosen));

  Tensor y({n, kk});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    auto out = y.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < kk; ++j) {
      if (chosen[i * kk + j]) mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < kk; ++j) {
      if (chosen[i * kk + j]) z += (out[j] = std::exp(row[j] - mx));
    }
    for (std::size_t j = 0; j < kk; ++j) out[j] /= z;
  }
  Tensor yv = y;
  return tape.record(std::move(y), {logits}, [logits, yv = std::move(yv)](Tape& t, const Tensor& g) {
    Tensor gx(yv.shape());
    for (std::size_t i = 0; i < yv.rows(); ++i) {
      const auto yr = yv.row(i);
      const auto gr = g.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
      auto out = gx.row(i);
      for (std::size_t j = 0; j < yr.size(); ++j) out[j] = yr[j] * (gr[j] - dot);
    }
    t.accumulate(logits, gx);
  });
}

ExpertMix expert_mix(Tape& tape, const ExpertBank& bank, const Var& complement) {
  const std::size_t kk = bank.num_experts();
  if (bank.k_top < 1 || bank.k_top > kk) throw ConfigError("edg: top_k outside [1, K]");
  ExpertMix mix;
  const Var logits = bank.gate(tape, complement);
  mix.probs = softmax_rows(logits);
  mix.weights = bank.k_top == kk ? mix.probs : top_k_softmax(logits, bank.k_top);
  for (std::size_t k = 0; k < kk; ++k) {
    const Var part = scale_rows(bank.experts[k](tape, complement), slice_cols(mix.weights, k, k + 1));
    mix.output = k == 0 ? part : mix.output + part;
  }
  return mix;
}

RoutingStats routing_stats(const Tensor& probs) {
  if (probs.rows() == 0) throw ContractError("routing_stats: empty batch");
  const std::size_t kk = probs.cols();
  RoutingStats s;
  s.fraction.assign(kk, 0.0);
  s.mean_prob.assign(kk, 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    // max_element returns the first maximum, which is the lowest index.
    s.fraction[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())] += 1.0;
    for (std::size_t k = 0; k < kk; ++k) s.mean_prob[k] += row[k];
  }
  const double n = static_cast<double>(probs.rows());
  for (std::size_t k = 0; k < kk; ++k) {
    s.fraction[k] /= n;
    s.mean_prob[k] /= n;
  }
  return s;
}

EdgStack EdgStack::create(ParameterStore& store, const std::string& name, std::size_t num_modalities,
                          std::size_t dim, std::size_t num_layers, std::size_t heads, std::size_t num_experts,
                          std::size_t k_top, Rng& rng) {
  if (num_modalities < 2 && num_layers > 0) throw ContractError("edg: needs at least two modalities");
  EdgStack s;
  for (std::size_t l = 0; l < num_layers; ++l) {
    EdgLayer layer;
    for (std::size_t m = 0; m < num_modalities; ++m) {
      const std::string prefix = name + "/l" + std::to_string(l) + "/m" + std::to_string(m);
      layer.banks.push_back(ExpertBank::create(store, prefix + "/moe", (num_modalities - 1) * dim, dim, num_experts,
                                               k_top, rng));
      layer.attention.push_back(GraphTransformerLayer::create(store, prefix + "/gt", dim, heads, rng));
    }
    s.layers.push_back(std::move(layer));
  }
  return s;
}

EdgOutput edg_forward(Tape& tape, const EdgStack& stack, const std::vector<Var>& initial, const Adjacency& adj) {
  EdgOutput out;
  out.states = initial;
  for (const auto& layer : stack.layers) {
    if (layer.banks.size() != out.states.size()) throw DimensionError("edg: modality count differs from stack");
    std::vector<Var> next;
    next.reserve(out.states.size());
    for (std::size_t m = 0; m < out.states.size(); ++m) {
      ExpertMix mix = expert_mix(tape, layer.banks[m], build_complement(out.states, m));
      next.push_back(layer.attention[m](tape, out.states[m], mix.output, adj));
      out.mixes.push_back(std::move(mix));
    }
    out.states = std::move(next);
  }
  return out;
}

}  // namespace planet
