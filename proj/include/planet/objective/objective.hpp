// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "planet/encoder/layers.hpp"
#include "planet/magdata/sampling.hpp"

namespace planet {

/// H^(all,m) = H^(spe,m) ‖ H^(cross,m).
Var fuse(const Var& specific, const Var& cross);
/// Node embedding: per-modality fused rows side by side in modality order.
Var fuse_nodes(const std::vector<Var>& fused);

/// Linear heads on fused per-modality rows (width 2d in the full model).
struct DecoderSet {
  std::size_t num_modalities = 0;
  std::vector<Linear> self_recon;   // D_m^SMR: width → d_m
  std::vector<Linear> cross_recon;  // D_{mm'}^CMR, ordered pairs m≠m' in row-major order
  std::vector<Linear> structure;    // D_m^SR: width → d

  static DecoderSet create(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& dims,
                           std::size_t width, std::size_t dim, Rng& rng);

  [[nodiscard]] const Linear& cross(std::size_t from, std::size_t to) const;
};

/// Feature rows before masking: the masked rows with their slot targets restored.
std::vector<Tensor> unmasked_targets(const std::vector<Tensor>& masked, const MaskPlan& plan);

/// Restricts reconstruction to these batch rows; empty means every row.
using RowSubset = std::vector<std::size_t>;

/// Mean over modalities and rows of ‖D_m^SMR(h^(all,m)) − x^(m)‖².
Var self_recon_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused,
                    const std::vector<Tensor>& targets, const RowSubset& rows = {});
/// Mean over ordered pairs m≠m' and rows of ‖D_{mm'}^CMR(h^(all,m)) − x^(m')‖².
/// Throws ContractError with a single modality.
Var cross_recon_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused,
                     const std::vector<Tensor>& targets, const RowSubset& rows = {});

/// Per modality u = D_m^SR(h^(all,m)); −mean log σ(u_iᵀu_j) over E⁺ plus
/// −mean log(1 − σ(u_iᵀu_j)) over Ê, logits clamped to ±30, averaged over
/// modalities. An empty edge set contributes zero and logs a warning.
Var topo_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused, const std::vector<Edge>& positives,
              const std::vector<Edge>& negatives);

/// K·Σ_k P_k f_k per bank, averaged over banks. `probs[b]` is bank b's
/// pre-truncation gate softmax; f_k is treated as a constant.
Var load_balance_loss(Tape& tape, const std::vector<Var>& probs);

struct LossWeights {
  double feat = 0.1;   // β₁
  double topo = 0.1;   // β₂
  double gen = 0.2;    // β₃
  double vq = 0.1;     // β₄
  double load = 0.01;  // β₅
  double inter = 0.5;  // β_inter
  /// Reconstruct only masked nodes instead of every batch node.
  bool masked_only = false;

  /// Throws ConfigError on a negative weight.
  void validate() const;
};

struct LossBreakdown {
  double l_s = 0, l_c = 0, l_feat = 0, l_topo = 0, l_gen = 0, l_vq = 0, l_load = 0, total = 0;
};

struct LossTerms {
  Var l_s, l_c, l_topo, l_gen, l_vq, l_load;
};

struct WeightedLoss {
  Var total;
  LossBreakdown breakdown;
};

/// β₁(L_s + β_inter L_c) + β₂L_topo + β₃L_gen + β₄L_VQ + β₅L_load. Terms with
/// weight zero are left off the tape, so they send no gradient anywhere.
WeightedLoss total_loss(Tape& tape, const LossWeights& w, const LossTerms& terms);

}  // namespace planet
