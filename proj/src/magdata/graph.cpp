// SPDX-License-Identifier: Apache-2.0
#include "planet/magdata/graph.hpp"

#include <algorithm>

#include "planet/numerics/errors.hpp"

namespace planet {

Adjacency Adjacency::from_edges(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<std::size_t> degree(num_nodes, 1);
  for (const auto& e : edges) {
    ++degree[e.u];
    ++degree[e.v];
  }
  Adjacency adj;
  adj.offsets.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < num_nodes; ++i) adj.offsets[i + 1] = adj.offsets[i] + degree[i];
  adj.neighbors.resize(adj.offsets[num_nodes]);
  std::vector<std::size_t> fill(adj.offsets.begin(), adj.offsets.end() - 1);
  for (std::size_t i = 0; i < num_nodes; ++i) adj.neighbors[fill[i]++] = i;
  for (const auto& e : edges) {
    adj.neighbors[fill[e.u]++] = e.v;
    adj.neighbors[fill[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    std::sort(adj.neighbors.begin() + static_cast<std::ptrdiff_t>(adj.offsets[i]),
              adj.neighbors.begin() + static_cast<std::ptrdiff_t>(adj.offsets[i + 1]));
  }
  return adj;
}

MultimodalGraph::MultimodalGraph(std::size_t num_nodes, std::vector<Edge> edges, std::vector<std::string> modality_names,
                                 std::size_t anchor, std::vector<Tensor> features, std::vector<std::int32_t> labels,
                                 std::size_t num_classes, std::vector<Split> splits)
    : num_nodes_(num_nodes),
      edges_(std::move(edges)),
      modality_names_(std::move(modality_names)),
      anchor_(anchor),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      splits_(std::move(splits)) {
  if (modality_names_.empty()) throw FormatError("graph: at least one modality required");
  if (anchor_ >= modality_names_.size()) throw FormatError("graph: anchor index out of range");
  if (features_.size() != modality_names_.size()) throw FormatError("graph: one feature matrix per modality required");
  for (std::size_t m = 0; m < features_.size(); ++m) {
    const Tensor& x = features_[m];
    if (x.rank() != 2 || x.rows() != num_nodes_) {
      throw FormatError("graph: feature matrix " + std::to_string(m) + " has " +
                        (x.rank() == 2 ? std::to_string(x.rows()) : std::string("?")) + " rows, expected " +
                        std::to_string(num_nodes_));
    }
  }
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    Edge& e = edges_[k];
    if (e.u >= num_nodes_ || e.v >= num_nodes_) {
      throw FormatError("graph: edge " + std::to_string(k) + " (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                        ") references a node outside [0, " + std::to_string(num_nodes_) + ")");
    }
    if (e.u == e.v) throw FormatError("graph: edge " + std::to_string(k) + " is a self-loop");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  {
    std::vector<std::size_t> order(edges_.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return edges_[a] < edges_[b]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
      if (edges_[order[k]] == edges_[order[k - 1]]) {
        throw FormatError("graph: edge " + std::to_string(std::max(order[k], order[k - 1])) + " duplicates edge " +
                          std::to_string(std::min(order[k], order[k - 1])));
      }
    }
  }
  if (!labels_.empty()) {
    if (labels_.size() != num_nodes_) throw FormatError("graph: label count differs from node count");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
        throw FormatError("graph: label of node " + std::to_string(i) + " outside [0, num_classes)");
      }
    }
  }
  if (!splits_.empty()) {
    if (splits_.size() != num_nodes_) throw FormatError("graph: split count differs from node count");
    for (std::size_t i = 0; i < splits_.size(); ++i) {
      if (static_cast<std::uint8_t>(splits_[i]) > 2) throw FormatError("graph: invalid split for node " + std::to_string(i));
    }
  }

  std::vector<std::size_t> degree(num_nodes_, 0);
  for (const auto& e : edges_) {
    ++degree[e.u];
    ++degree[e.v];
  }
  nbr_offsets_.assign(num_nodes_ + 1, 0);
  for (std::size_t i = 0; i < num_nodes_; ++i) nbr_offsets_[i + 1] = nbr_offsets_[i] + degree[i];
  nbrs_.resize(nbr_offsets_[num_nodes_]);
  std::vector<std::size_t> fill(nbr_offsets_.begin(), nbr_offsets_.end() - 1);
  for (const auto& e : edges_) {
    nbrs_[fill[e.u]++] = e.v;
    nbrs_[fill[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < num_nodes_; ++i) {
    std::sort(nbrs_.begin() + static_cast<std::ptrdiff_t>(nbr_offsets_[i]),
              nbrs_.begin() + static_cast<std::ptrdiff_t>(nbr_offsets_[i + 1]));
  }
}

std::vector<std::size_t> MultimodalGraph::dims() const {
  std::vector<std::size_t> d;
  for (const auto& x : features_) d.push_back(x.cols());
  return d;
}

std::vector<std::size_t> MultimodalGraph::nodes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits_.size(); ++i) {
    if (splits_[i] == s) out.push_back(i);
  }
  return out;
}

std::span<const std::size_t> MultimodalGraph::neighbors(std::size_t i) const {
  return {nbrs_.data() + nbr_offsets_[i], nbr_offsets_[i + 1] - nbr_offsets_[i]};
}

bool MultimodalGraph::has_edge(std::size_t a, std::size_t b) const {
  const auto n = neighbors(a);
  return std::binary_search(n.begin(), n.end(), b);
}

bool MultimodalGraph::same_schema(const MultimodalGraph& other) const {
  return modality_names_ == other.modality_names_ && anchor_ == other.anchor_ && dims() == other.dims();
}

bool operator==(const MultimodalGraph& a, const MultimodalGraph& b) {
  return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_ && a.modality_names_ == b.modality_names_ &&
         a.anchor_ == b.anchor_ && a.features_ == b.features_ && a.labels_ == b.labels_ &&
         a.num_classes_ == b.num_classes_ && a.splits_ == b.splits_;
}

}  // namespace planet
