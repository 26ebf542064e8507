// SPDX-License-Identifier: Apache-2.0
#include "planet/magdata/generators.hpp"

#include <algorithm>
#include <numeric>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/rng.hpp"

namespace planet {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

std::vector<Edge> erdos_renyi_blocks(std::size_t n, const std::vector<std::size_t>& block, double p_in, double p_out,
                                     Rng rng) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? p_in : p_out;
      if (rng.bernoulli(p)) edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
  return edges;
}

}  // namespace

std::vector<Split> random_splits(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed) {
  check_probability(train_fraction, "train_fraction");
  check_probability(val_fraction, "val_fraction");
  if (train_fraction + val_fraction > 1.0) throw ConfigError("train + val fractions exceed 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).stream("split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(n));
  std::vector<Split> splits(n, Split::Test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) {
      splits[order[k]] = Split::Train;
    } else if (k < n_train + n_val) {
      splits[order[k]] = Split::Val;
    }
  }
  return splits;
}

MultimodalGraph gen_sbm_mag(std::uint64_t seed, const SbmSpec& spec) {
  check_probability(spec.p_in, "p_in");
  check_probability(spec.p_out, "p_out");
  if (spec.dims.size() != spec.modality_names.size()) throw ConfigError("sbm: one dim per modality required");
  const Rng root(seed);
  const std::size_t n = std::accumulate(spec.block_sizes.begin(), spec.block_sizes.end(), std::size_t{0});
  std::vector<std::size_t> block;
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) block.insert(block.end(), spec.block_sizes[b], b);

  auto edges = erdos_renyi_blocks(n, block, spec.p_in, spec.p_out, root.stream("edges"));

  std::vector<Tensor> features;
  for (std::size_t m = 0; m < spec.dims.size(); ++m) {
    Rng means_rng = root.stream("means", m);
    Rng noise_rng = root.stream("noise", m);
    Tensor means({spec.block_sizes.size(), spec.dims[m]});
    for (auto& v : means.data()) v = spec.mean_scale * means_rng.normal();
    Tensor x({n, spec.dims[m]});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < spec.dims[m]; ++j) x(i, j) = means(block[i], j) + spec.noise * noise_rng.normal();
    }
    features.push_back(std::move(x));
  }
  std::vector<std::int32_t> labels(block.begin(), block.end());
  return MultimodalGraph(n, std::move(edges), spec.modality_names, spec.anchor, std::move(features), std::move(labels),
                         spec.block_sizes.size(),
                         random_splits(n, spec.train_fraction, spec.val_fraction, root.stream("split").next_u64()));
}

SynergyGraph gen_synergy_mag(const SynergySpec& spec, std::uint64_t seed) {
  if (spec.modality_names.size() < 2) throw ConfigError("synergy: at least two modalities required");
  check_probability(spec.edge_density, "edge_density");
  const Rng root(seed);
  const std::size_t n = spec.num_nodes;

  std::vector<std::size_t> one_block(n, 0);
  auto edges = erdos_renyi_blocks(n, one_block, spec.edge_density, spec.edge_density, root.stream("edges"));

  SynergyGraph out;
  Rng bits = root.stream("bits");
  out.a.resize(n);
  out.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.a[i] = bits.bernoulli(0.5) ? 1 : 0;
    out.b[i] = bits.bernoulli(0.5) ? 1 : 0;
  }

  out.paired_b = out.b;
  if (spec.mode == SynergyMode::Neighbor) {
    const Adjacency adj = Adjacency::from_edges(n, edges);
    for (std::size_t i = 0; i < n; ++i) {
      const auto nb = adj.of(i);
      if (nb.size() < 2) throw ContractError("synergy: neighbor mode requires no isolated nodes (node " + std::to_string(i) + ")");
      std::size_t ones = 0;
      for (auto j : nb) ones += out.b[j];
      const std::size_t zeros = nb.size() - ones;
      out.paired_b[i] = ones > zeros ? 1 : (zeros > ones ? 0 : out.b[i]);
    }
  }

  std::vector<std::int32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = out.a[i] ^ out.paired_b[i];

  const std::size_t width = 1 + spec.unique_dims;
  std::vector<Tensor> features;
  for (std::size_t m = 0; m < spec.modality_names.size(); ++m) {
    Rng noise = root.stream("noise", m);
    Rng unique = root.stream("unique", m);
    Tensor x({n, width});
    for (std::size_t i = 0; i < n; ++i) {
      // Modalities beyond A and B carry only unique coordinates.
      const double planted = m == 0 ? (2.0 * out.a[i] - 1.0) : (m == 1 ? (2.0 * out.b[i] - 1.0) : 0.0);
      x(i, 0) = planted + spec.noise * noise.normal();
      for (std::size_t j = 1; j < width; ++j) x(i, j) = unique.normal();
    }
    features.push_back(std::move(x));
  }
  out.graph = MultimodalGraph(n, std::move(edges), spec.modality_names, 0, std::move(features), std::move(labels), 2,
                              random_splits(n, spec.train_fraction, spec.val_fraction, root.stream("split").next_u64()));
  return out;
}

}  // namespace planet
