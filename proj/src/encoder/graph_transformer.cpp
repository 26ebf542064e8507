// SPDX-License-Identifier: Apache-2.0
#include "planet/encoder/graph_transformer.hpp"

#include <cmath>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

namespace {

void check_attention_shapes(const Tensor& q, const Tensor& k, const Adjacency& adj, std::size_t heads) {
  if (heads == 0 || q.cols() % heads != 0) throw DimensionError("attention: head count must divide width");
  if (q.cols() != k.cols()) throw DimensionError("attention: query and key widths differ");
  if (adj.num_nodes() != q.rows()) throw DimensionError("attention: adjacency size differs from query rows");
  for (std::size_t i = 0; i < q.rows(); ++i) {
    if (adj.of(i).empty()) throw ContractError("attention: node " + std::to_string(i) + " has no neighbors");
    for (auto j : adj.of(i)) {
      if (j >= k.rows()) throw DimensionError("attention: neighbor index outside key rows");
    }
  }
}

}  // namespace

std::vector<std::vector<std::vector<double>>> attention_weights(const Tensor& q, const Tensor& k, const Adjacency& adj,
                                                                std::size_t heads) {
  check_attention_shapes(q, k, adj, heads);
  const std::size_t dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<std::vector<std::vector<double>>> alpha(q.rows(), std::vector<std::vector<double>>(heads));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto nb = adj.of(i);
    const auto qi = q.row(i);
    for (std::size_t h = 0; h < heads; ++h) {
      auto& a = alpha[i][h];
      a.resize(nb.size());
      for (std::size_t t = 0; t < nb.size(); ++t) {
        const auto kj = k.row(nb[t]);
        double s = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += qi[c] * kj[c];
        a[t] = s * inv_sqrt;
      }
      kernels::softmax_inplace(a);
    }
  }
  return alpha;
}

Var graph_attention(const Var& q, const Var& k, const Var& v, const Adjacency& adj, std::size_t heads) {
  Tape& tape = q.tape();
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (vv.rows() != kv.rows() || vv.cols() != kv.cols()) throw DimensionError("attention: key and value shapes differ");
  auto alpha = attention_weights(qv, kv, adj, heads);

  // Dropout acts on the normalized weights; `kept` holds the post-dropout weights.
  auto kept = alpha;
  const double p = tape.training ? tape.dropout : 0.0;
  if (p > 0.0) {
    if (tape.dropout_rng == nullptr) throw ContractError("attention: training tape has no rng");
    const double scale = 1.0 / (1.0 - p);
    for (auto& per_head : kept) {
      for (auto& a : per_head) {
        for (auto& w : a) w = tape.dropout_rng->bernoulli(p) ? 0.0 : w * scale;
      }
    }
  }

  const std::size_t n = qv.rows();
  const std::size_t d = qv.cols();
  const std::size_t dh = d / heads;
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = adj.of(i);
    auto oi = out.row(i);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < nb.size(); ++t) {
        const double w = kept[i][h][t];
        if (w == 0.0) continue;
        const auto vj = vv.row(nb[t]);
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) oi[c] += w * vj[c];
      }
    }
  }

  return tape.record(std::move(out), {q, k, v},
                     [q, k, v, adj, heads, alpha = std::move(alpha), kept = std::move(kept)](Tape& t, const Tensor& g) {
                       const Tensor& qv = q.value();
                       const Tensor& kv = k.value();
                       const Tensor& vv = v.value();
                       const std::size_t n = qv.rows();
                       const std::size_t d = qv.cols();
                       const std::size_t dh = d / heads;
                       const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
                       Tensor gq({n, d});
                       Tensor gk(kv.shape());
                       Tensor gv(vv.shape());
                       std::vector<double> dalpha;
                       for (std::size_t i = 0; i < n; ++i) {
                         const auto nb = adj.of(i);
                         const auto gi = g.row(i);
                         const auto qi = qv.row(i);
                         auto gqi = gq.row(i);
                         for (std::size_t h = 0; h < heads; ++h) {
                           const auto& a = alpha[i][h];
                           const auto& ak = kept[i][h];
                           dalpha.assign(nb.size(), 0.0);
                           double weighted = 0.0;
                           for (std::size_t t = 0; t < nb.size(); ++t) {
                             const auto vj = vv.row(nb[t]);
                             auto gvj = gv.row(nb[t]);
                             double dot = 0.0;
                             for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
                               dot += gi[c] * vj[c];
                               gvj[c] += ak[t] * gi[c];
                             }
                             // Undo the dropout scaling: d kept / d alpha = kept / alpha (0 when dropped).
                             dalpha[t] = a[t] > 0.0 ? dot * ak[t] / a[t] : 0.0;
                             weighted += a[t] * dalpha[t];
                           }
                           for (std::size_t t = 0; t < nb.size(); ++t) {
                             const double ds = a[t] * (dalpha[t] - weighted) * inv_sqrt;
                             if (ds == 0.0) continue;
                             const auto kj = kv.row(nb[t]);
                             auto gkj = gk.row(nb[t]);
                             for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
                               gqi[c] += ds * kj[c];
                               gkj[c] += ds * qi[c];
                             }
                           }
                         }
                       }
                       if (q.needs_grad()) t.accumulate(q, gq);
                       if (k.needs_grad()) t.accumulate(k, gk);
                       if (v.needs_grad()) t.accumulate(v, gv);
                     });
}

GraphTransformerLayer GraphTransformerLayer::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                                    std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("graph transformer: heads (" + std::to_string(heads) + ") must divide dim (" +
                      std::to_string(dim) + ")");
  }
  GraphTransformerLayer l;
  l.dim = dim;
  l.heads = heads;
  l.q = Linear::create(store, name + "/Q", dim, dim, rng, false);
  l.k = Linear::create(store, name + "/K", dim, dim, rng, false);
  l.v = Linear::create(store, name + "/V", dim, dim, rng, false);
  l.o = Linear::create(store, name + "/O", dim, dim, rng);
  l.ln1_gain = &store.add(name + "/ln1/gain", Tensor({1, dim}, 1.0));
  l.ln1_bias = &store.add(name + "/ln1/bias", Tensor::zeros(1, dim));
  l.ffn = Mlp2::create(store, name + "/ffn", dim, 2 * dim, dim, rng);
  l.ln2_gain = &store.add(name + "/ln2/gain", Tensor({1, dim}, 1.0));
  l.ln2_bias = &store.add(name + "/ln2/bias", Tensor::zeros(1, dim));
  return l;
}

Var GraphTransformerLayer::operator()(Tape& tape, const Var& h, const Var& e, const Adjacency& adj) const {
  if (h.cols() != dim || e.cols() != dim) throw DimensionError("graph transformer: input width differs from layer dim");
  const Var attended = graph_attention(q(tape, h), k(tape, e), v(tape, e), adj, heads);
  const Var h1 = layer_norm(h + o(tape, attended), tape.parameter(*ln1_gain), tape.parameter(*ln1_bias));
  const Var f = ffn(tape, h1, tape.training ? tape.dropout : 0.0);
  return layer_norm(h1 + f, tape.parameter(*ln2_gain), tape.parameter(*ln2_bias));
}

ModalityBranch ModalityBranch::create(ParameterStore& store, const std::string& name, std::size_t in_dim,
                                      std::size_t dim, std::size_t num_layers, std::size_t heads, Rng& rng) {
  ModalityBranch b;
  b.project = Mlp2::create(store, name + "/mlp", in_dim, dim, dim, rng);
  for (std::size_t l = 0; l < num_layers; ++l) {
    b.layers.push_back(GraphTransformerLayer::create(store, name + "/gt" + std::to_string(l), dim, heads, rng));
  }
  return b;
}

Var ModalityBranch::specific(Tape& tape, const Var& h0, const Adjacency& adj) const {
  Var h = h0;
  for (const auto& layer : layers) h = layer(tape, h, h, adj);
  return h;
}

}  // namespace planet
