// SPDX-License-Identifier: Apache-2.0
#include "planet/ndr/ndr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "planet/numerics/errors.hpp"
#include "planet/numerics/ops.hpp"

namespace planet {

Codebook Codebook::create(ParameterStore& store, const std::string& name, std::size_t size, std::size_t dim,
                          Rng& rng) {
  if (size == 0 || dim == 0) throw ConfigError("codebook: size and dim must be positive");
  Rng local = rng.stream(name);
  Tensor s({size, dim});
  for (auto& v : s.data()) v = local.normal();
  Codebook c;
  c.tokens = &store.add(name + "/tokens", std::move(s));
  c.reset_usage();
  return c;
}

void Codebook::init_from_batch(const Tensor& h) {
  if (h.cols() != dim()) throw DimensionError("codebook: init batch width differs from token dim");
  const std::size_t rows = std::min(size(), h.rows());
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = tokens->value.row(r);
    const auto src = h.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  initialized = true;
}

std::vector<std::size_t> nearest_tokens(const Tensor& tokens, const Tensor& h) {
  if (tokens.cols() != h.cols()) throw DimensionError("quantize: token dim differs from input width");
  std::vector<std::size_t> index(h.rows(), 0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto x = h.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tokens.rows(); ++j) {
      const auto s = tokens.row(j);
      double d = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) d += (s[c] - x[c]) * (s[c] - x[c]);
      if (d < best) {
        best = d;
        index[i] = j;
      }
    }
  }
  return index;
}

QuantizeResult quantize(Tape& tape, Codebook& codebook, const Var& h, bool straight_through) {
  QuantizeResult r;
  r.straight_through = straight_through;
  r.index = tape.freeze(nearest_tokens(codebook.tokens->value, h.value()));
  if (codebook.usage.size() != codebook.size()) codebook.reset_usage();
  for (auto j : r.index) ++codebook.usage[j];

  const Var s = tape.parameter(*codebook.tokens);
  if (!straight_through) {
    r.quantized = gather_rows(s, r.index);
    return r;
  }
  Tensor out({h.rows(), h.cols()});
  for (std::size_t i = 0; i < r.index.size(); ++i) {
    const auto src = s.value().row(r.index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  // The value is s_c + (h − sg[h]). Outside a gradient-check replay the
  // bracket is exactly zero and is skipped, so rows stay bit-identical to S.
  const Tensor held = tape.freeze(h.value());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double delta = h.value()[k] - held[k];
    if (delta != 0.0) out[k] += delta;
  }
  r.quantized = tape.record(std::move(out), {h, s}, [h, s, index = r.index](Tape& t, const Tensor& g) {
    if (h.needs_grad()) t.accumulate(h, g);
    if (s.needs_grad()) {
      Tensor& gs = t.grad_buffer(s);
      for (std::size_t i = 0; i < index.size(); ++i) {
        auto dst = gs.row(index[i]);
        const auto src = g.row(i);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    }
  });
  return r;
}

Var general_knowledge_loss(const std::vector<Var>& quantized, std::size_t anchor, double tau) {
  if (quantized.size() < 2) throw ContractError("general knowledge loss: needs at least two modalities");
  if (anchor >= quantized.size()) throw ContractError("general knowledge loss: anchor out of range");
  if (!(tau > 0.0)) throw ConfigError("general knowledge loss: temperature must be positive");
  const std::size_t n = quantized[anchor].rows();
  for (const auto& q : quantized) {
    if (q.rows() != n || q.cols() != quantized[anchor].cols()) {
      throw DimensionError("general knowledge loss: modality shapes differ");
    }
  }
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i;

  const Var a = normalize_rows(quantized[anchor]);
  Var total;
  for (std::size_t m = 0; m < quantized.size(); ++m) {
    if (m == anchor) continue;
    const Var logits = scale(matmul_nt(a, normalize_rows(quantized[m])), 1.0 / tau);
    const Var rows = pick(log_softmax_rows(logits), diag);
    const Var cols = pick(log_softmax_rows(transpose(logits)), diag);
    const Var term = sum(rows) + sum(cols);
    total = total.valid() ? total + term : term;
  }
  return scale(total, -1.0 / static_cast<double>(n * (quantized.size() - 1)));
}

Var vq_loss(Tape& tape, const Codebook& codebook, const std::vector<Var>& encoded,
            const std::vector<QuantizeResult>& results) {
  if (encoded.size() != results.size() || encoded.empty()) {
    throw ContractError("vq loss: one quantize result per encoded modality required");
  }
  const Var s = tape.parameter(*codebook.tokens);
  const std::size_t n = encoded.front().rows();
  Var total;
  for (std::size_t m = 0; m < encoded.size(); ++m) {
    const Var chosen = gather_rows(s, results[m].index);
    const Var commit = sum(row_sq_norm(detach(chosen) - encoded[m]));
    const Var book = sum(row_sq_norm(chosen - detach(encoded[m])));
    const Var term = commit + scale(book, codebook.gamma);
    total = total.valid() ? total + term : term;
  }
  return scale(total, 1.0 / static_cast<double>(n));
}

CodebookReport codebook_report(const std::vector<std::size_t>& usage) {
  CodebookReport r;
  r.usage = usage;
  double total = 0.0;
  for (auto u : usage) {
    total += static_cast<double>(u);
    if (u == 0) ++r.dead;
  }
  if (total == 0.0) return r;
  double entropy = 0.0;
  for (auto u : usage) {
    if (u == 0) continue;
    const double p = static_cast<double>(u) / total;
    entropy -= p * std::log(p);
  }
  r.perplexity = std::exp(entropy);
  return r;
}

}  // namespace planet
