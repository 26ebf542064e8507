// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "planet/magdata/graph.hpp"

namespace planet {

struct MaskConfig {
  double node_p = 0.0;
  double modality_p = 0.0;
  /// 1.0 zeroes the whole (node, modality) slot.
  double dim_p = 1.0;
};

/// One masked (node, modality) slot.
struct MaskSlot {
  std::size_t node = 0;
  std::size_t modality = 0;
  /// 1 where the dimension was zeroed.
  std::vector<std::uint8_t> dim_mask;
  /// Unmasked feature row, kept as the reconstruction target.
  std::vector<double> target;
};

struct MaskPlan {
  /// Selected nodes, ascending. A node can be selected with no modality slot.
  std::vector<std::size_t> nodes;
  /// Sorted by (node, modality).
  std::vector<MaskSlot> slots;

  [[nodiscard]] bool empty() const { return slots.empty(); }
  /// Slots of modality m, in node order.
  [[nodiscard]] std::vector<const MaskSlot*> slots_of(std::size_t modality) const;
};

struct MaskedFeatures {
  MaskPlan plan;
  std::vector<Tensor> features;
};

/// Hierarchical masking: node with node_p, then each of its modalities with
/// modality_p, then each dimension with dim_p. Node, modality and dimension
/// draws come from separate sub-streams of `seed`.
MaskedFeatures apply_mask(const std::vector<Tensor>& features, const MaskConfig& cfg, std::uint64_t seed);
MaskedFeatures apply_mask(const MultimodalGraph& g, double node_p, double modality_p, double dim_p, std::uint64_t seed);

/// Local pair (a < b) in batch-local ids.
using LocalEdge = Edge;

struct EgoBatch {
  /// Global ids of batch nodes, ascending; local id = position.
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> centers_global;
  std::vector<std::size_t> centers_local;
  /// Visible subgraph edges (holdout removed); message passing uses these plus self-loops.
  std::vector<LocalEdge> visible_edges;
  std::vector<LocalEdge> heldout_edges;
  Adjacency adjacency;
  /// Per-modality local rows after masking.
  std::vector<Tensor> features;
  /// Mask plan in local node ids.
  MaskPlan mask;
  std::vector<LocalEdge> positives;
  std::vector<LocalEdge> negatives;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
  /// Local id of a global node, or size() if absent.
  [[nodiscard]] std::size_t local_of(std::size_t global) const;
};

struct EgoBatchOptions {
  std::size_t hops = 2;
  double edge_holdout_p = 0.0;
  MaskConfig mask{};
};

/// Union of `hops`-hop neighborhoods of the centers with the induced edges.
/// Held-out edges leave the message-passing list but join E⁺ together with
/// visible edges; Ê is drawn uniformly from local non-edges with |Ê| = |E⁺|.
/// If fewer non-edges exist, E⁺ is truncated to match (a warning is logged);
/// with none at all Ê is empty and E⁺ is kept.
/// Throws ContractError on an out-of-range center.
EgoBatch sample_ego_batch(const MultimodalGraph& g, const std::vector<std::size_t>& centers, const EgoBatchOptions& opts,
                          std::uint64_t seed);

/// Nodes within `hops` of any center, ascending.
std::vector<std::size_t> khop_nodes(const MultimodalGraph& g, const std::vector<std::size_t>& centers, std::size_t hops);

}  // namespace planet
