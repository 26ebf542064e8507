// SPDX-License-Identifier: Apache-2.0
#include "planet/magdata/sampling.hpp"

#include <algorithm>
#include <unordered_set>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/log.hpp"
#include "planet/numerics/rng.hpp"

namespace planet {

std::vector<const MaskSlot*> MaskPlan::slots_of(std::size_t modality) const {
  std::vector<const MaskSlot*> out;
  for (const auto& s : slots) {
    if (s.modality == modality) out.push_back(&s);
  }
  return out;
}

MaskedFeatures apply_mask(const std::vector<Tensor>& features, const MaskConfig& cfg, std::uint64_t seed) {
  for (double p : {cfg.node_p, cfg.modality_p, cfg.dim_p}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask probabilities must lie in [0, 1]");
  }
  MaskedFeatures out;
  out.features = features;
  if (features.empty()) return out;
  const std::size_t n = features[0].rows();
  const Rng root(seed);
  Rng node_rng = root.stream("mask/node");
  Rng modality_rng = root.stream("mask/modality");
  Rng dim_rng = root.stream("mask/dim");
  for (std::size_t i = 0; i < n; ++i) {
    if (!node_rng.bernoulli(cfg.node_p)) continue;
    out.plan.nodes.push_back(i);
    for (std::size_t m = 0; m < features.size(); ++m) {
      if (!modality_rng.bernoulli(cfg.modality_p)) continue;
      MaskSlot slot;
      slot.node = i;
      slot.modality = m;
      const auto row = features[m].row(i);
      slot.target.assign(row.begin(), row.end());
      slot.dim_mask.resize(row.size());
      for (std::size_t j = 0; j < row.size(); ++j) {
        slot.dim_mask[j] = dim_rng.bernoulli(cfg.dim_p) ? 1 : 0;
        if (slot.dim_mask[j]) out.features[m](i, j) = 0.0;
      }
      out.plan.slots.push_back(std::move(slot));
    }
  }
  return out;
}

MaskedFeatures apply_mask(const MultimodalGraph& g, double node_p, double modality_p, double dim_p, std::uint64_t seed) {
  return apply_mask(g.features(), MaskConfig{node_p, modality_p, dim_p}, seed);
}

std::size_t EgoBatch::local_of(std::size_t global) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), global);
  return (it != nodes.end() && *it == global) ? static_cast<std::size_t>(it - nodes.begin()) : nodes.size();
}

std::vector<std::size_t> khop_nodes(const MultimodalGraph& g, const std::vector<std::size_t>& centers, std::size_t hops) {
  std::vector<std::uint8_t> seen(g.num_nodes(), 0);
  std::vector<std::size_t> frontier;
  for (auto c : centers) {
    if (c >= g.num_nodes()) {
      throw ContractError("ego batch: center " + std::to_string(c) + " outside [0, " + std::to_string(g.num_nodes()) + ")");
    }
    if (!seen[c]) {
      seen[c] = 1;
      frontier.push_back(c);
    }
  }
  for (std::size_t h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<std::size_t> next;
    for (auto u : frontier) {
      for (auto v : g.neighbors(u)) {
        if (!seen[v]) {
          seen[v] = 1;
          next.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

namespace {

std::uint64_t pair_key(std::size_t a, std::size_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

// Uniform sample of `count` local non-edges without replacement.
std::vector<LocalEdge> sample_non_edges(std::size_t n, const std::unordered_set<std::uint64_t>& edge_keys,
                                        std::size_t count, Rng& rng) {
  std::vector<LocalEdge> out;
  if (count == 0) return out;
  const std::size_t total_pairs = n * (n - 1) / 2;
  const std::size_t available = total_pairs - edge_keys.size();
  if (available <= 4 * count) {
    std::vector<LocalEdge> all;
    all.reserve(available);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!edge_keys.contains(pair_key(a, b))) all.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
      }
    }
    for (std::size_t k = 0; k < count; ++k) std::swap(all[k], all[k + rng.index(all.size() - k)]);
    all.resize(count);
    out = std::move(all);
  } else {
    std::unordered_set<std::uint64_t> taken;
    while (out.size() < count) {
      std::size_t a = rng.index(n);
      std::size_t b = rng.index(n);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      const auto key = pair_key(a, b);
      if (edge_keys.contains(key) || !taken.insert(key).second) continue;
      out.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

EgoBatch sample_ego_batch(const MultimodalGraph& g, const std::vector<std::size_t>& centers, const EgoBatchOptions& opts,
                          std::uint64_t seed) {
  if (!(opts.edge_holdout_p >= 0.0 && opts.edge_holdout_p <= 1.0)) throw ConfigError("edge_holdout_p must lie in [0, 1]");
  const Rng root(seed);
  EgoBatch batch;
  batch.nodes = khop_nodes(g, centers, opts.hops);
  const std::size_t n = batch.nodes.size();
  batch.centers_global = centers;
  for (auto c : centers) batch.centers_local.push_back(batch.local_of(c));

  Rng holdout_rng = root.stream("holdout");
  std::unordered_set<std::uint64_t> edge_keys;
  for (std::size_t a = 0; a < n; ++a) {
    for (auto gv : g.neighbors(batch.nodes[a])) {
      const std::size_t b = batch.local_of(gv);
      if (b >= n || b <= a) continue;
      const LocalEdge e{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
      edge_keys.insert(pair_key(a, b));
      if (holdout_rng.bernoulli(opts.edge_holdout_p)) {
        batch.heldout_edges.push_back(e);
      } else {
        batch.visible_edges.push_back(e);
      }
    }
  }
  batch.adjacency = Adjacency::from_edges(n, batch.visible_edges);

  batch.positives = batch.visible_edges;
  batch.positives.insert(batch.positives.end(), batch.heldout_edges.begin(), batch.heldout_edges.end());
  std::sort(batch.positives.begin(), batch.positives.end());

  const std::size_t available = n < 2 ? 0 : n * (n - 1) / 2 - edge_keys.size();
  Rng neg_rng = root.stream("negatives");
  if (available == 0) {
    if (!batch.positives.empty()) {
      log::warn("ego batch: no local non-edges; negative set is empty and positives are kept");
    }
  } else if (available < batch.positives.size()) {
    log::warn("ego batch: only " + std::to_string(available) + " local non-edges for " +
              std::to_string(batch.positives.size()) + " positives; truncating positives");
    Rng trunc_rng = root.stream("truncate");
    auto& pos = batch.positives;
    for (std::size_t k = 0; k < available; ++k) std::swap(pos[k], pos[k + trunc_rng.index(pos.size() - k)]);
    pos.resize(available);
    std::sort(pos.begin(), pos.end());
  }
  if (available > 0) batch.negatives = sample_non_edges(n, edge_keys, batch.positives.size(), neg_rng);

  std::vector<Tensor> local;
  for (const auto& x : g.features()) {
    Tensor t({n, x.cols()});
    for (std::size_t a = 0; a < n; ++a) {
      const auto row = x.row(batch.nodes[a]);
      std::copy(row.begin(), row.end(), t.row(a).begin());
    }
    local.push_back(std::move(t));
  }
  auto masked = apply_mask(local, opts.mask, root.stream("mask").next_u64());
  batch.features = std::move(masked.features);
  batch.mask = std::move(masked.plan);
  return batch;
}

}  // namespace planet
