// SPDX-License-Identifier: Apache-2.0
#include "planet/objective/objective.hpp"

#include "planet/edg/edg.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/log.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

namespace {

constexpr double kLogitClamp = 30.0;

Var select_rows(const Var& x, const RowSubset& rows) { return rows.empty() ? x : gather_rows(x, rows); }

Tensor select_rows(const Tensor& x, const RowSubset& rows) {
  if (rows.empty()) return x;
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

Var squared_error_sum(Tape& tape, const Var& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("reconstruction: decoder output shape differs from target");
  }
  return sum(row_sq_norm(pred - tape.constant(target)));
}

Var pair_logits(const Var& u, const std::vector<Edge>& edges) {
  std::vector<std::size_t> a(edges.size());
  std::vector<std::size_t> b(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    a[e] = edges[e].u;
    b[e] = edges[e].v;
  }
  return row_dot(gather_rows(u, a), gather_rows(u, b));
}

Var add_or_init(const Var& acc, const Var& term) { return acc.valid() ? acc + term : term; }

}  // namespace

Var fuse(const Var& specific, const Var& cross) {
  if (specific.rows() != cross.rows() || specific.cols() != cross.cols()) {
    throw DimensionError("fuse: specific and cross shapes differ");
  }
  return concat_cols({specific, cross});
}

Var fuse_nodes(const std::vector<Var>& fused) {
  if (fused.empty()) throw ContractError("fuse_nodes: no modalities");
  return fused.size() == 1 ? fused.front() : concat_cols(fused);
}

DecoderSet DecoderSet::create(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& dims,
                              std::size_t width, std::size_t dim, Rng& rng) {
  DecoderSet d;
  d.num_modalities = dims.size();
  for (std::size_t m = 0; m < dims.size(); ++m) {
    d.self_recon.push_back(Linear::create(store, name + "/smr" + std::to_string(m), width, dims[m], rng));
  }
  for (std::size_t m = 0; m < dims.size(); ++m) {
    for (std::size_t t = 0; t < dims.size(); ++t) {
      if (m == t) continue;
      d.cross_recon.push_back(
          Linear::create(store, name + "/cmr" + std::to_string(m) + "_" + std::to_string(t), width, dims[t], rng));
    }
  }
  for (std::size_t m = 0; m < dims.size(); ++m) {
    d.structure.push_back(Linear::create(store, name + "/sr" + std::to_string(m), width, dim, rng));
  }
  return d;
}

const Linear& DecoderSet::cross(std::size_t from, std::size_t to) const {
  if (from == to || from >= num_modalities || to >= num_modalities) throw ContractError("decoder: bad modality pair");
  // Row `from` skips the diagonal entry.
  return cross_recon[from * (num_modalities - 1) + (to < from ? to : to - 1)];
}

std::vector<Tensor> unmasked_targets(const std::vector<Tensor>& masked, const MaskPlan& plan) {
  std::vector<Tensor> out = masked;
  for (const auto& slot : plan.slots) {
    auto row = out.at(slot.modality).row(slot.node);
    std::copy(slot.target.begin(), slot.target.end(), row.begin());
  }
  return out;
}

Var self_recon_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused,
                    const std::vector<Tensor>& targets, const RowSubset& rows) {
  if (fused.size() != targets.size() || fused.size() != dec.num_modalities) {
    throw DimensionError("self reconstruction: modality counts differ");
  }
  Var total;
  std::size_t n = 0;
  for (std::size_t m = 0; m < fused.size(); ++m) {
    const Var pred = dec.self_recon[m](tape, select_rows(fused[m], rows));
    n = pred.rows();
    total = add_or_init(total, squared_error_sum(tape, pred, select_rows(targets[m], rows)));
  }
  if (n == 0) return tape.constant(Tensor::zeros(1, 1));
  return scale(total, 1.0 / static_cast<double>(fused.size() * n));
}

Var cross_recon_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused,
                     const std::vector<Tensor>& targets, const RowSubset& rows) {
  if (fused.size() < 2) throw ContractError("cross reconstruction: needs at least two modalities");
  if (fused.size() != targets.size() || fused.size() != dec.num_modalities) {
    throw DimensionError("cross reconstruction: modality counts differ");
  }
  Var total;
  std::size_t n = 0;
  for (std::size_t m = 0; m < fused.size(); ++m) {
    const Var src = select_rows(fused[m], rows);
    n = src.rows();
    for (std::size_t t = 0; t < fused.size(); ++t) {
      if (t == m) continue;
      total = add_or_init(total, squared_error_sum(tape, dec.cross(m, t)(tape, src), select_rows(targets[t], rows)));
    }
  }
  if (n == 0) return tape.constant(Tensor::zeros(1, 1));
  const std::size_t pairs = fused.size() * (fused.size() - 1);
  return scale(total, 1.0 / static_cast<double>(pairs * n));
}

Var topo_loss(Tape& tape, const DecoderSet& dec, const std::vector<Var>& fused, const std::vector<Edge>& positives,
              const std::vector<Edge>& negatives) {
  if (fused.size() != dec.num_modalities) throw DimensionError("topo loss: modality count differs from decoders");
  if (positives.empty()) log::warn("topo loss: batch has no positive edges; positive term is zero");
  if (negatives.empty()) log::warn("topo loss: batch has no negative pairs; negative term is zero");
  Var total;
  for (std::size_t m = 0; m < fused.size(); ++m) {
    const Var u = dec.structure[m](tape, fused[m]);
    if (!positives.empty()) {
      total = add_or_init(total, scale(mean(log_sigmoid(pair_logits(u, positives), kLogitClamp)), -1.0));
    }
    if (!negatives.empty()) {
      // log(1 − σ(x)) = log σ(−x)
      const Var neg = scale(pair_logits(u, negatives), -1.0);
      total = add_or_init(total, scale(mean(log_sigmoid(neg, kLogitClamp)), -1.0));
    }
  }
  if (!total.valid()) return tape.constant(Tensor::zeros(1, 1));
  return scale(total, 1.0 / static_cast<double>(fused.size()));
}

Var load_balance_loss(Tape& tape, const std::vector<Var>& probs) {
  if (probs.empty()) return tape.constant(Tensor::zeros(1, 1));
  Var total;
  for (const auto& p : probs) {
    const auto stats = routing_stats(p.value());
    Tensor f({1, stats.fraction.size()});
    for (std::size_t k = 0; k < stats.fraction.size(); ++k) f(0, k) = stats.fraction[k];
    f = tape.freeze(std::move(f));
    const Var term = scale(sum(mul(column_mean(p), tape.constant(std::move(f)))), static_cast<double>(p.cols()));
    total = add_or_init(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(probs.size()));
}

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"beta_feat", feat}, {"beta_topo", topo}, {"beta_gen", gen},
                                                {"beta_vq", vq},     {"beta_load", load}, {"beta_inter", inter}};
  for (const auto& [name, v] : all) {
    if (!(v >= 0.0)) throw ConfigError(std::string("loss weight ") + name + " must be non-negative");
  }
}

WeightedLoss total_loss(Tape& tape, const LossWeights& w, const LossTerms& terms) {
  w.validate();
  auto value = [](const Var& v) { return v.valid() ? v.value()[0] : 0.0; };
  WeightedLoss out;
  auto& b = out.breakdown;
  b.l_s = value(terms.l_s);
  b.l_c = value(terms.l_c);
  b.l_feat = b.l_s + w.inter * b.l_c;
  b.l_topo = value(terms.l_topo);
  b.l_gen = value(terms.l_gen);
  b.l_vq = value(terms.l_vq);
  b.l_load = value(terms.l_load);

  Var total;
  auto add_term = [&](const Var& v, double weight) {
    if (weight == 0.0 || !v.valid()) return;
    total = add_or_init(total, scale(v, weight));
  };
  add_term(terms.l_s, w.feat);
  add_term(terms.l_c, w.feat * w.inter);
  add_term(terms.l_topo, w.topo);
  add_term(terms.l_gen, w.gen);
  add_term(terms.l_vq, w.vq);
  add_term(terms.l_load, w.load);
  out.total = total.valid() ? total : tape.constant(Tensor::zeros(1, 1));
  b.total = out.total.value()[0];
  return out;
}

}  // namespace planet
