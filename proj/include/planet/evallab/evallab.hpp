// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "planet/numerics/gradcheck.hpp"
#include "planet/magdata/generators.hpp"
#include "planet/model/planet_model.hpp"
#include "planet/trainer/trainer.hpp"

namespace planet {

// ---- few-shot prototypes -------------------------------------------------

struct FewShotTask {
  std::size_t n_way = 2;
  std::size_t k_shot = 20;
  std::size_t n_query = 10;
  std::size_t n_task = 10;
  /// Classes eligible for sampling; empty means every class of the labels.
  std::vector<std::size_t> class_pool;
  std::uint64_t seed = 0;
};

struct FewShotResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over repetitions
  std::vector<double> per_task;
};

/// Prototype = mean support embedding; each query goes to the prototype of
/// highest cosine similarity, the lowest class id winning ties. Throws
/// FormatError when fewer than n_way pool classes have k_shot + n_query
/// labelled nodes, and ConfigError on a zero-sized task.
FewShotResult fewshot_eval(const Tensor& embeddings, const std::vector<std::int32_t>& labels,
                           const FewShotTask& task);

// ---- discrete optimal transport ------------------------------------------

/// Probability vector over codebook tokens. `support` is sorted and unique.
struct DiscreteDistribution {
  std::vector<std::size_t> support;
  std::vector<double> weights;

  [[nodiscard]] double total() const;
};

/// Empirical distribution of the token indices: weight(c) = count(c) / N.
/// An empty index list yields an empty distribution.
DiscreteDistribution pushforward(const std::vector<std::size_t>& token_index);

struct TransportSolution {
  double cost = 0.0;
  Tensor plan;  // supply × demand
  std::size_t pivots = 0;
};

/// Exact balanced transportation problem by the transportation simplex:
/// north-west-corner start, MODI potentials, Bland's rule for entering and
/// leaving cells. Throws ContractError when the masses differ by more than
/// 1e-9 or any entry is negative.
TransportSolution solve_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                  const Tensor& cost);

/// W₁ between two distributions over the rows of `tokens`, ground cost the
/// Euclidean distance between token vectors.
double wasserstein1(const DiscreteDistribution& p, const DiscreteDistribution& q, const Tensor& tokens);

// ---- alignment report ----------------------------------------------------

struct AlignmentReport {
  std::size_t anchor = 0;
  /// W₁(ν̂_m, ν̂_anchor) per modality; 0 at the anchor itself.
  std::vector<double> w1;
  /// E‖h − Q(h)‖₂ over nodes, per modality.
  std::vector<double> residual;
  std::vector<DiscreteDistribution> pushforward;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Full-graph evaluation forward; codebook usage counters are left untouched.
/// Throws ContractError for the vanilla ablation, which has no codebook.
AlignmentReport alignment_report(PlanetModel& model, const MultimodalGraph& g);

// ---- theorem experiments -------------------------------------------------

struct SynergyExperimentConfig {
  SynergySpec data;
  TrainConfig train;
  ProbeConfig probe;
  double max_vanilla = 0.60;
  double min_edg = 0.80;
  double min_gap = 0.25;
};

/// Settings from the calibration runs: N=1000, σ=0.1, sparse edges, no
/// dropout or masking, 100×40 desk steps.
SynergyExperimentConfig default_synergy_config();

struct SynergyResult {
  std::uint64_t seed = 0;
  double acc_vanilla = 0.0;
  double acc_edg = 0.0;
  bool pass_vanilla = false;
  bool pass_edg = false;
  bool pass_gap = false;
  double seconds = 0.0;

  [[nodiscard]] bool pass() const { return pass_vanilla && pass_edg && pass_gap; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Trains the vanilla ablation and the full model with the same data, seed
/// and budget, then fits a linear probe for y = a XOR b on each.
SynergyResult synergy_experiment(std::uint64_t seed, const SynergyExperimentConfig& config = default_synergy_config());

struct AlignmentExperimentConfig {
  SbmSpec data;
  TrainConfig train;
};

AlignmentExperimentConfig default_alignment_config();

struct AlignmentExperimentResult {
  std::uint64_t seed = 0;
  AlignmentReport aligned;
  AlignmentReport ablated;  // β_gen = β_vq = 0
  double mean_residual_aligned = 0.0;
  double mean_residual_ablated = 0.0;
  bool pass_w1 = false;
  bool pass_residual = false;

  [[nodiscard]] bool pass() const { return pass_w1 && pass_residual; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Paired pre-training runs differing only in β_gen and β_vq; compares W₁ of
/// every non-anchor modality and the mean residual.
AlignmentExperimentResult alignment_experiment(std::uint64_t seed,
                                               const AlignmentExperimentConfig& config = default_alignment_config());

// ---- gradient fidelity ---------------------------------------------------

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t num_nodes = 0;
  std::size_t num_params = 0;
  double seconds = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Finite-difference check of the full weighted objective, every parameter
/// entry, on a 12-node two-modality SBM graph with the default loss weights
/// and full-softmax gating. Parameters are redrawn uniformly so that no ReLU
/// input sits exactly at zero.
ModelGradCheck model_gradcheck(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace planet
