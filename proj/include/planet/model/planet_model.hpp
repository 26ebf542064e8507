// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "planet/edg/edg.hpp"
#include "planet/magdata/graph.hpp"
#include "planet/magdata/sampling.hpp"
#include "planet/ndr/ndr.hpp"
#include "planet/numerics/checkpoint.hpp"
#include "planet/objective/objective.hpp"

namespace planet {

struct ModelConfig {
  std::vector<std::size_t> dims;
  std::size_t anchor = 0;
  std::size_t dim = 32;
  std::size_t num_layers = 2;
  std::size_t heads = 4;
  std::size_t num_experts = 3;
  std::size_t top_k = 2;
  std::size_t codebook_size = 64;
  double tau = 0.93;
  double gamma = 0.25;
  /// False builds the vanilla ablation: specific branches only, no EDG, no
  /// codebook, node embedding = concatenated specific states.
  bool interaction = true;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  void adopt_schema(const MultimodalGraph& g) {
    dims = g.dims();
    anchor = g.anchor();
  }
  [[nodiscard]] std::size_t num_modalities() const { return dims.size(); }
  [[nodiscard]] std::size_t fused_width() const { return interaction ? 2 * dim : dim; }
  [[nodiscard]] std::size_t embedding_dim() const { return fused_width() * dims.size(); }
};

struct ForwardResult {
  std::vector<Var> initial;     // H^(0,m)
  std::vector<Var> specific;    // H^(spe,m)
  std::vector<Var> interacted;  // H^(L,m) after EDG; empty for the vanilla ablation
  std::vector<QuantizeResult> quantized;
  std::vector<Var> gate_probs;  // one per expert bank use, layer-major
  std::vector<Var> fused;       // H^(all,m)
  Var embedding;                // n × embedding_dim
};

class PlanetModel {
 public:
  PlanetModel(ModelConfig config, std::uint64_t seed);
  PlanetModel(const PlanetModel&) = delete;
  PlanetModel& operator=(const PlanetModel&) = delete;
  PlanetModel(PlanetModel&&) = default;
  PlanetModel& operator=(PlanetModel&&) = default;

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  [[nodiscard]] const ParameterStore& params() const { return params_; }
  Codebook& codebook() { return codebook_; }
  [[nodiscard]] const Codebook& codebook() const { return codebook_; }
  [[nodiscard]] const DecoderSet& decoders() const { return decoders_; }
  [[nodiscard]] const EdgStack& edg() const { return edg_; }
  [[nodiscard]] const std::vector<ModalityBranch>& branches() const { return branches_; }

  /// Encoder → EDG → NDR → fusion on one set of feature rows. On the first
  /// call with an uninitialized codebook the tokens are copied from this
  /// batch's EDG outputs, modalities interleaved.
  ForwardResult forward(Tape& tape, const std::vector<Tensor>& features, const Adjacency& adj);

  /// Evaluation-mode node embeddings of a whole graph.
  Tensor embed(const MultimodalGraph& g);

  /// Parameters plus "model/config" and "codebook/state" entries.
  [[nodiscard]] TensorEntries entries() const;
  static PlanetModel from_entries(const TensorEntries& entries);
  void save(const std::filesystem::path& path) const { write_checkpoint(path, entries()); }
  static PlanetModel load(const std::filesystem::path& path) { return from_entries(read_checkpoint(path)); }

  /// Throws FormatError when the graph's modality dims or anchor differ from the model's.
  void check_schema(const MultimodalGraph& g) const;

 private:
  ModelConfig config_;
  ParameterStore params_;
  std::vector<ModalityBranch> branches_;
  EdgStack edg_;
  Codebook codebook_;
  DecoderSet decoders_;
};

struct BatchLoss {
  WeightedLoss loss;
  ForwardResult forward;
  std::vector<RoutingStats> routing;
};

/// Forward plus every loss term of the objective on one ego-batch.
BatchLoss batch_loss(Tape& tape, PlanetModel& model, const EgoBatch& batch, const LossWeights& weights);

}  // namespace planet
