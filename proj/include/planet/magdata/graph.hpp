// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "planet/numerics/tensor.hpp"

namespace planet {

struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Incoming-neighbor lists in CSR form. Every node lists itself; each list
/// is sorted ascending so aggregation order never depends on input order.
struct Adjacency {
  std::vector<std::size_t> offsets;  // size n + 1
  std::vector<std::size_t> neighbors;

  [[nodiscard]] std::size_t num_nodes() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  [[nodiscard]] std::span<const std::size_t> of(std::size_t i) const {
    return {neighbors.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }

  /// Symmetric expansion of undirected edges plus one self-loop per node.
  static Adjacency from_edges(std::size_t num_nodes, std::span<const Edge> edges);
};

/// Node split membership.
enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

/// Multimodal attributed graph with one feature matrix per modality.
///
/// Undirected edges are stored once with u < v; self-loops and duplicates
/// are rejected. Exactly one modality (the text anchor) is flagged.
class MultimodalGraph {
 public:
  MultimodalGraph() = default;
  /// Validates everything; throws FormatError naming the offending record.
  MultimodalGraph(std::size_t num_nodes, std::vector<Edge> edges, std::vector<std::string> modality_names,
                  std::size_t anchor, std::vector<Tensor> features, std::vector<std::int32_t> labels = {},
                  std::size_t num_classes = 0, std::vector<Split> splits = {});

  [[nodiscard]] std::size_t num_nodes() const { return num_nodes_; }
  [[nodiscard]] std::size_t num_edges() const { return edges_.size(); }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] std::size_t num_modalities() const { return modality_names_.size(); }
  [[nodiscard]] const std::vector<std::string>& modality_names() const { return modality_names_; }
  [[nodiscard]] std::size_t anchor() const { return anchor_; }
  [[nodiscard]] const std::vector<Tensor>& features() const { return features_; }
  [[nodiscard]] const Tensor& features(std::size_t m) const { return features_.at(m); }
  [[nodiscard]] std::vector<std::size_t> dims() const;

  [[nodiscard]] bool has_labels() const { return !labels_.empty(); }
  [[nodiscard]] const std::vector<std::int32_t>& labels() const { return labels_; }
  [[nodiscard]] std::size_t num_classes() const { return num_classes_; }
  [[nodiscard]] bool has_splits() const { return !splits_.empty(); }
  [[nodiscard]] const std::vector<Split>& splits() const { return splits_; }
  [[nodiscard]] std::vector<std::size_t> nodes_in(Split s) const;

  /// Undirected neighbors of i (no self), sorted.
  [[nodiscard]] std::span<const std::size_t> neighbors(std::size_t i) const;
  [[nodiscard]] bool has_edge(std::size_t a, std::size_t b) const;
  /// Message-passing adjacency with self-loops.
  [[nodiscard]] Adjacency adjacency() const { return Adjacency::from_edges(num_nodes_, edges_); }

  /// Same modality count, names, dims and anchor.
  [[nodiscard]] bool same_schema(const MultimodalGraph& other) const;

  friend bool operator==(const MultimodalGraph& a, const MultimodalGraph& b);

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> modality_names_;
  std::size_t anchor_ = 0;
  std::vector<Tensor> features_;
  std::vector<std::int32_t> labels_;
  std::size_t num_classes_ = 0;
  std::vector<Split> splits_;
  std::vector<std::size_t> nbr_offsets_;
  std::vector<std::size_t> nbrs_;
};

}  // namespace planet
