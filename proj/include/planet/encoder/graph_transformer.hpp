// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "planet/encoder/layers.hpp"
#include "planet/magdata/graph.hpp"

namespace planet {

/// Per-head neighbor attention weights, α[i][h][t] for the t-th entry of
/// adj.of(i). Computed with max-subtraction; each (i, h) row sums to one.
std::vector<std::vector<std::vector<double>>> attention_weights(const Tensor& q, const Tensor& k, const Adjacency& adj,
                                                                std::size_t heads);

/// Multi-head neighborhood attention as one tape node.
///
/// Row i of the output is the concatenation over heads h of
/// Σ_{j∈N_i} α_{ij,h} v_j^h, with α_{ij,h} = softmax_j(⟨q_i^h, k_j^h⟩/√d_h)
/// and q^h, k^h, v^h the h-th column block of q, k, v. Query rows index
/// `adj`; key/value rows are indexed by adjacency entries. When the tape is
/// training with dropout > 0 the weights go through inverted dropout.
Var graph_attention(const Var& q, const Var& k, const Var& v, const Adjacency& adj, std::size_t heads);

/// One attention block: attention (queries from h, keys and values from e),
/// output projection, residual + LayerNorm, ReLU FFN of width d_ff = 2d,
/// residual + LayerNorm.
struct GraphTransformerLayer {
  std::size_t dim = 0;
  std::size_t heads = 1;
  Linear q, k, v;  // bias-free, d×d; column block h is head h
  Linear o;
  Mlp2 ffn;
  Parameter* ln1_gain = nullptr;
  Parameter* ln1_bias = nullptr;
  Parameter* ln2_gain = nullptr;
  Parameter* ln2_bias = nullptr;

  /// Throws ConfigError unless heads divides dim.
  static GraphTransformerLayer create(ParameterStore& store, const std::string& name, std::size_t dim,
                                      std::size_t heads, Rng& rng);

  /// `h` is n×d (queries and residual), `e` is n×d (keys and values).
  Var operator()(Tape& tape, const Var& h, const Var& e, const Adjacency& adj) const;
};

/// MLP_m followed by L self-modal attention layers.
struct ModalityBranch {
  Mlp2 project;
  std::vector<GraphTransformerLayer> layers;

  static ModalityBranch create(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t dim,
                               std::size_t num_layers, std::size_t heads, Rng& rng);

  /// H^(0,m) = MLP_m(x̃).
  Var project_modality(Tape& tape, const Var& x) const { return project(tape, x); }
  /// Self-modal stack: every layer attends with keys/values = its own input.
  Var specific(Tape& tape, const Var& h0, const Adjacency& adj) const;
};

}  // namespace planet
