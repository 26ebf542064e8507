// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "planet/model/planet_model.hpp"
#include "planet/trainer/config.hpp"

namespace planet {

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
  double perplexity = 0.0;  // of this step's token assignments
};

struct EpochSummary {
  std::size_t epoch = 0;
  LossBreakdown mean;
  CodebookReport codebook;
  /// Per expert bank (layer-major), f and P averaged over the epoch's steps.
  std::vector<RoutingStats> routing;
};

struct PretrainOptions {
  /// When set, metrics.csv, manifest.json and model.plnt are written here.
  std::filesystem::path out_dir;
  /// Config file text echoed into the manifest verbatim.
  std::string config_text;
  /// Display names of the input graphs, parallel to the graph list.
  std::vector<std::string> data_names;
  /// Called after every step; lets experiments observe training.
  std::function<void(const StepRecord&, PlanetModel&)> on_step;
};

struct PretrainResult {
  PlanetModel model;
  std::vector<StepRecord> steps;
  std::vector<EpochSummary> epochs;
  nlohmann::json manifest;
  std::string checkpoint_hash;
};

/// Self-supervised pre-training over one or more graphs sharing a schema.
///
/// Each step picks a graph by the dataset weights, samples centers,
/// builds the masked ego-batch, runs the full forward and every loss,
/// backpropagates and takes one AdamW step. All randomness derives from
/// config.seed through named sub-streams, so a rerun is bit-identical.
/// Throws FormatError on a schema mismatch and NumericalError (after
/// writing nan_dump.json when out_dir is set) on a non-finite loss.
PretrainResult pretrain(const std::vector<const MultimodalGraph*>& graphs, const TrainConfig& config,
                        const PretrainOptions& options = {});

/// Evaluation CSV header and row formatting for StepRecord.
std::string metrics_csv_header();
std::string metrics_csv_row(const StepRecord& r);

struct EmbedOptions {
  /// 0 runs one full-graph forward; otherwise centers are processed in
  /// chunks of this size on their `hops`-hop induced subgraphs.
  std::size_t chunk_size = 0;
  /// 0 means the model's receptive field, num_layers.
  std::size_t hops = 0;
};

/// Evaluation-mode embeddings, one row per node, width 2·d·|Ω|.
Tensor embed(PlanetModel& model, const MultimodalGraph& g, const EmbedOptions& options = {});

struct ProbeConfig {
  std::size_t hidden = 0;  // 0 = linear head
  std::size_t epochs = 300;
  double lr = 0.05;
  double weight_decay = 0.0;
  /// Standardize features with train-split statistics.
  bool standardize = true;
  std::uint64_t seed = 0;
};

struct NodeProbeResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::size_t> predictions;  // parallel to the test nodes
};

/// Cross-entropy head on frozen embeddings; metrics on `test`.
/// Throws FormatError when labels are missing or a split is empty.
NodeProbeResult finetune_node_probe(const Tensor& embeddings, const std::vector<std::int32_t>& labels,
                                    std::size_t num_classes, const std::vector<std::size_t>& train,
                                    const std::vector<std::size_t>& test, const ProbeConfig& config = {});

struct LinkProbeOptions {
  double test_fraction = 0.2;
  std::size_t negatives_per_positive = 100;
};

struct LinkProbeResult {
  double mrr = 0.0;
  std::size_t test_edges = 0;
};

/// Pair head on [e_u ‖ e_v], BCE against sampled non-edges. Each held-out
/// edge (u, v) is ranked among itself and corruptions (u, w).
LinkProbeResult finetune_link_probe(const Tensor& embeddings, const MultimodalGraph& g, const ProbeConfig& config,
                                    const LinkProbeOptions& options = {});

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);
/// Unweighted mean of per-class F1; a class with no support and no
/// predictions, or zero precision and recall, scores 0.
double macro_f1(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                std::size_t num_classes);
/// Mean of 1/rank; rank counts negatives scoring at least the positive
/// (ties rank the positive last).
double mean_reciprocal_rank(const std::vector<double>& positive, const std::vector<std::vector<double>>& negatives);

}  // namespace planet
