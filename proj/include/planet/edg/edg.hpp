// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "planet/encoder/graph_transformer.hpp"

namespace planet {

/// Concatenation of every modality state except `target`, in registration
/// order. Throws ContractError with fewer than two modalities.
Var build_complement(const std::vector<Var>& states, std::size_t target);

/// K two-layer experts plus a two-layer gate over the complement vector.
struct ExpertBank {
  std::vector<Mlp2> experts;
  Mlp2 gate;
  std::size_t k_top = 1;

  /// Throws ConfigError when k_top is outside [1, K].
  static ExpertBank create(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t dim,
                           std::size_t num_experts, std::size_t k_top, Rng& rng);

  [[nodiscard]] std::size_t num_experts() const { return experts.size(); }
};

struct ExpertMix {
  Var output;  // n×d gate-weighted expert sum
  Var probs;   // n×K softmax over all logits, before truncation
  Var weights; // n×K mixture weights actually used
};

/// Keeps the k largest entries of each row of `logits` (ties to the lower
/// index) and returns the softmax restricted to them, zeros elsewhere.
Var top_k_softmax(const Var& logits, std::size_t k);

/// e = Σ_k G(n)_k E_k(n). With k_top = K the gate is the plain softmax.
ExpertMix expert_mix(Tape& tape, const ExpertBank& bank, const Var& complement);

struct RoutingStats {
  std::vector<double> fraction;  // f_k: share of rows whose top-1 expert is k
  std::vector<double> mean_prob; // P_k: mean softmax probability
};

/// Top-1 ties resolve to the lowest index. Throws ContractError on an empty batch.
RoutingStats routing_stats(const Tensor& probs);

struct EdgLayer {
  std::vector<ExpertBank> banks;
  std::vector<GraphTransformerLayer> attention;
};

struct EdgStack {
  std::vector<EdgLayer> layers;

  static EdgStack create(ParameterStore& store, const std::string& name, std::size_t num_modalities,
                         std::size_t dim, std::size_t num_layers, std::size_t heads, std::size_t num_experts,
                         std::size_t k_top, Rng& rng);
};

struct EdgOutput {
  std::vector<Var> states;           // H^(L,m) per modality
  std::vector<ExpertMix> mixes;      // one per (layer, modality), layer-major
};

/// All modalities advance together: layer ℓ reads the layer ℓ−1 state of
/// every modality before any modality is updated.
EdgOutput edg_forward(Tape& tape, const EdgStack& stack, const std::vector<Var>& initial, const Adjacency& adj);

}  // namespace planet
