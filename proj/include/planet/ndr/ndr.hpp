// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "planet/numerics/rng.hpp"
#include "planet/numerics/tape.hpp"

namespace planet {

/// Shared discrete token table S ∈ R^{C×d} with per-token usage counters.
struct Codebook {
  Parameter* tokens = nullptr;
  std::vector<std::size_t> usage;
  double tau = 0.93;
  double gamma = 0.25;
  /// False until init_from_batch has copied encoder outputs in.
  bool initialized = false;

  /// Tokens start as N(0, 1) draws from rng.stream(name).
  static Codebook create(ParameterStore& store, const std::string& name, std::size_t size, std::size_t dim,
                         Rng& rng);

  [[nodiscard]] std::size_t size() const { return tokens->value.rows(); }
  [[nodiscard]] std::size_t dim() const { return tokens->value.cols(); }
  void reset_usage() { usage.assign(size(), 0); }
  /// Copies the first min(C, n) rows of `h` into the table; the rest keep
  /// their Gaussian values. Marks the codebook initialized.
  void init_from_batch(const Tensor& h);
};

/// argmin_j ‖s_j − h_i‖₂ per row by full scan; ties go to the lower index.
std::vector<std::size_t> nearest_tokens(const Tensor& tokens, const Tensor& h);

struct QuantizeResult {
  Var quantized;  // rows are exact copies of codebook rows
  std::vector<std::size_t> index;
  bool straight_through = true;
};

/// Forward value is s_c. With straight_through the output gradient is
/// passed to h unchanged and also scattered into the selected rows of S;
/// without it only S receives gradient. Usage counters are incremented.
QuantizeResult quantize(Tape& tape, Codebook& codebook, const Var& h, bool straight_through = true);

/// Symmetric cosine InfoNCE between the anchor modality and every other one,
/// averaged over nodes and non-anchor modalities.
Var general_knowledge_loss(const std::vector<Var>& quantized, std::size_t anchor, double tau);

/// (1/N) Σ_i Σ_m ‖sg[s_c] − h‖² + γ‖s_c − sg[h]‖². `encoded[m]` and
/// `results[m]` belong to the same modality.
Var vq_loss(Tape& tape, const Codebook& codebook, const std::vector<Var>& encoded,
            const std::vector<QuantizeResult>& results);

struct CodebookReport {
  std::vector<std::size_t> usage;
  std::size_t dead = 0;
  double perplexity = 0.0;  // exp of the entropy of the usage distribution; 0 with no usage
};

CodebookReport codebook_report(const std::vector<std::size_t>& usage);
inline CodebookReport codebook_report(const Codebook& c) { return codebook_report(c.usage); }

}  // namespace planet
