// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planet/magdata/graph.hpp"

namespace planet {

struct SbmSpec {
  std::vector<std::size_t> block_sizes = {150, 150};
  double p_in = 0.2;
  double p_out = 0.01;
  std::vector<std::string> modality_names = {"text", "image"};
  std::vector<std::size_t> dims = {16, 24};
  std::size_t anchor = 0;
  /// Block means are drawn N(0, mean_scale²·I) per modality.
  double mean_scale = 1.0;
  double noise = 1.0;
  /// Train/val fractions for the node split; the rest is test.
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

/// Stochastic block model graph. Features of node i in modality m are
/// μ_{block(i)}^m + noise·ε; labels are block ids.
MultimodalGraph gen_sbm_mag(std::uint64_t seed, const SbmSpec& spec);

enum class SynergyMode { WithinNode, Neighbor };

/// Planted-synergy construction: bit a lives in modality A, bit b in
/// modality B, the label is their XOR, so neither modality alone carries
/// information about it.
struct SynergySpec {
  std::size_t num_nodes = 1000;
  /// Erdős–Rényi edge probability.
  double edge_density = 0.002;
  double noise = 0.1;
  /// Extra label-independent Gaussian coordinates per modality.
  std::size_t unique_dims = 3;
  SynergyMode mode = SynergyMode::WithinNode;
  std::vector<std::string> modality_names = {"text", "image"};
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

struct SynergyGraph {
  MultimodalGraph graph;
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> b;
  /// The b actually paired with a_i: b_i in within-node mode, the majority
  /// of b over N_i (ties → b_i) in neighbor mode.
  std::vector<std::uint8_t> paired_b;
};

/// Modality A row: [(2a−1) + noise·ε, U_A], modality B row: [(2b−1) + noise·ε, U_B].
/// Modality 0 is A and the anchor. Throws ContractError in neighbor mode if
/// any node is isolated, and ConfigError for fewer than two modalities.
SynergyGraph gen_synergy_mag(const SynergySpec& spec, std::uint64_t seed);

/// Seeded random train/val/test assignment.
std::vector<Split> random_splits(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed);

}  // namespace planet
