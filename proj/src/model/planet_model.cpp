// SPDX-License-Identifier: Apache-2.0
#include "planet/model/planet_model.hpp"

#include <cmath>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

namespace {

constexpr const char* kConfigEntry = "model/config";
constexpr const char* kCodebookEntry = "codebook/state";

// Layout of the "model/config" row. Sizes are stored as doubles; all are far below 2^53.
enum ConfigSlot : std::size_t {
  kDim, kLayers, kHeads, kExperts, kTopK, kCodebook, kTau, kGamma, kAnchor, kInteraction, kModalities, kFixedSlots
};

}  // namespace

void ModelConfig::validate() const {
  if (dims.empty()) throw ConfigError("model: no modalities");
  for (auto d : dims) {
    if (d == 0) throw ConfigError("model: modality dim must be positive");
  }
  if (anchor >= dims.size()) throw ConfigError("model: anchor modality out of range");
  if (dim == 0) throw ConfigError("model: dim must be positive");
  if (heads == 0 || dim % heads != 0) throw ConfigError("model: heads must divide dim");
  if (!interaction) return;
  if (dims.size() < 2) throw ConfigError("model: interaction needs at least two modalities");
  if (num_experts == 0) throw ConfigError("model: num_experts must be positive");
  if (top_k < 1 || top_k > num_experts) throw ConfigError("model: top_k must lie in [1, num_experts]");
  if (codebook_size == 0) throw ConfigError("model: codebook_size must be positive");
  if (!(tau > 0.0)) throw ConfigError("model: tau must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("model: gamma must be non-negative");
}

PlanetModel::PlanetModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t nm = config_.num_modalities();
  for (std::size_t m = 0; m < nm; ++m) {
    branches_.push_back(ModalityBranch::create(params_, "branch" + std::to_string(m), config_.dims[m], config_.dim,
                                               config_.num_layers, config_.heads, rng));
  }
  if (config_.interaction) {
    edg_ = EdgStack::create(params_, "edg", nm, config_.dim, config_.num_layers, config_.heads, config_.num_experts,
                            config_.top_k, rng);
    codebook_ = Codebook::create(params_, "dsrs", config_.codebook_size, config_.dim, rng);
    codebook_.tau = config_.tau;
    codebook_.gamma = config_.gamma;
  }
  decoders_ = DecoderSet::create(params_, "dec", config_.dims, config_.fused_width(), config_.dim, rng);
}

ForwardResult PlanetModel::forward(Tape& tape, const std::vector<Tensor>& features, const Adjacency& adj) {
  const std::size_t nm = config_.num_modalities();
  if (features.size() != nm) throw DimensionError("model: feature modality count differs from model");
  ForwardResult r;
  for (std::size_t m = 0; m < nm; ++m) {
    r.initial.push_back(branches_[m].project_modality(tape, tape.constant(features[m])));
    r.specific.push_back(branches_[m].specific(tape, r.initial.back(), adj));
  }
  if (!config_.interaction) {
    r.fused = r.specific;
    r.embedding = fuse_nodes(r.fused);
    return r;
  }

  auto edg = edg_forward(tape, edg_, r.initial, adj);
  r.interacted = std::move(edg.states);
  for (auto& mix : edg.mixes) r.gate_probs.push_back(mix.probs);

  if (!codebook_.initialized) {
    const std::size_t n = r.interacted.front().rows();
    Tensor rows({std::min(codebook_.size(), n * nm), config_.dim});
    for (std::size_t t = 0; t < rows.rows(); ++t) {
      const auto src = r.interacted[t % nm].value().row(t / nm);
      std::copy(src.begin(), src.end(), rows.row(t).begin());
    }
    codebook_.init_from_batch(rows);
  }
  for (std::size_t m = 0; m < nm; ++m) {
    r.quantized.push_back(quantize(tape, codebook_, r.interacted[m]));
    r.fused.push_back(fuse(r.specific[m], r.quantized.back().quantized));
  }
  r.embedding = fuse_nodes(r.fused);
  return r;
}

Tensor PlanetModel::embed(const MultimodalGraph& g) {
  check_schema(g);
  Tape tape;
  tape.training = false;
  return forward(tape, g.features(), g.adjacency()).embedding.value();
}

void PlanetModel::check_schema(const MultimodalGraph& g) const {
  if (g.dims() != config_.dims || g.anchor() != config_.anchor) {
    throw FormatError("graph modality schema differs from the model's");
  }
}

TensorEntries PlanetModel::entries() const {
  TensorEntries out;
  Tensor cfg({1, kFixedSlots + config_.dims.size()});
  cfg(0, kDim) = static_cast<double>(config_.dim);
  cfg(0, kLayers) = static_cast<double>(config_.num_layers);
  cfg(0, kHeads) = static_cast<double>(config_.heads);
  cfg(0, kExperts) = static_cast<double>(config_.num_experts);
  cfg(0, kTopK) = static_cast<double>(config_.top_k);
  cfg(0, kCodebook) = static_cast<double>(config_.codebook_size);
  cfg(0, kTau) = config_.tau;
  cfg(0, kGamma) = config_.gamma;
  cfg(0, kAnchor) = static_cast<double>(config_.anchor);
  cfg(0, kInteraction) = config_.interaction ? 1.0 : 0.0;
  cfg(0, kModalities) = static_cast<double>(config_.dims.size());
  for (std::size_t m = 0; m < config_.dims.size(); ++m) cfg(0, kFixedSlots + m) = static_cast<double>(config_.dims[m]);
  out.emplace_back(kConfigEntry, std::move(cfg));

  if (config_.interaction) {
    // Initialized flag followed by the usage counters.
    Tensor state({1, 1 + codebook_.usage.size()});
    state(0, 0) = codebook_.initialized ? 1.0 : 0.0;
    for (std::size_t j = 0; j < codebook_.usage.size(); ++j) state(0, 1 + j) = static_cast<double>(codebook_.usage[j]);
    out.emplace_back(kCodebookEntry, std::move(state));
  }
  for (auto& e : parameter_entries(params_)) out.push_back(std::move(e));
  return out;
}

PlanetModel PlanetModel::from_entries(const TensorEntries& entries) {
  const Tensor* cfg = find_entry(entries, kConfigEntry);
  if (cfg == nullptr || cfg->rows() != 1 || cfg->cols() < kFixedSlots) {
    throw FormatError("checkpoint: missing or malformed model/config entry");
  }
  auto size_at = [&](std::size_t slot) {
    const double v = (*cfg)(0, slot);
    if (!(v >= 0.0) || v != std::floor(v)) throw FormatError("checkpoint: model/config holds a non-integer size");
    return static_cast<std::size_t>(v);
  };
  ModelConfig c;
  c.dim = size_at(kDim);
  c.num_layers = size_at(kLayers);
  c.heads = size_at(kHeads);
  c.num_experts = size_at(kExperts);
  c.top_k = size_at(kTopK);
  c.codebook_size = size_at(kCodebook);
  c.tau = (*cfg)(0, kTau);
  c.gamma = (*cfg)(0, kGamma);
  c.anchor = size_at(kAnchor);
  c.interaction = (*cfg)(0, kInteraction) != 0.0;
  const std::size_t nm = size_at(kModalities);
  if (cfg->cols() != kFixedSlots + nm) throw FormatError("checkpoint: model/config modality count mismatch");
  for (std::size_t m = 0; m < nm; ++m) c.dims.push_back(size_at(kFixedSlots + m));

  PlanetModel model(c, 0);
  load_parameters(model.params_, entries);
  if (c.interaction) {
    const Tensor* state = find_entry(entries, kCodebookEntry);
    if (state == nullptr || state->cols() != 1 + c.codebook_size) {
      throw FormatError("checkpoint: missing or malformed codebook/state entry");
    }
    model.codebook_.initialized = (*state)(0, 0) != 0.0;
    for (std::size_t j = 0; j < c.codebook_size; ++j) {
      model.codebook_.usage[j] = static_cast<std::size_t>((*state)(0, 1 + j));
    }
  }
  return model;
}

BatchLoss batch_loss(Tape& tape, PlanetModel& model, const EgoBatch& batch, const LossWeights& weights) {
  BatchLoss out;
  out.forward = model.forward(tape, batch.features, batch.adjacency);
  const auto& f = out.forward;
  const auto targets = unmasked_targets(batch.features, batch.mask);
  const RowSubset rows = weights.masked_only ? batch.mask.nodes : RowSubset{};
  const auto& cfg = model.config();

  LossTerms terms;
  const bool skip_recon = weights.masked_only && rows.empty();
  if (!skip_recon) {
    terms.l_s = self_recon_loss(tape, model.decoders(), f.fused, targets, rows);
    if (cfg.num_modalities() >= 2) terms.l_c = cross_recon_loss(tape, model.decoders(), f.fused, targets, rows);
  }
  terms.l_topo = topo_loss(tape, model.decoders(), f.fused, batch.positives, batch.negatives);
  if (cfg.interaction) {
    std::vector<Var> cross;
    for (const auto& q : f.quantized) cross.push_back(q.quantized);
    terms.l_gen = general_knowledge_loss(cross, cfg.anchor, cfg.tau);
    terms.l_vq = vq_loss(tape, model.codebook(), f.interacted, f.quantized);
    terms.l_load = load_balance_loss(tape, f.gate_probs);
    for (const auto& p : f.gate_probs) out.routing.push_back(routing_stats(p.value()));
  }
  out.loss = total_loss(tape, weights, terms);
  return out;
}

}  // namespace planet
