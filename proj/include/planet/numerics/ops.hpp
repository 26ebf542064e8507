// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "planet/numerics/tape.hpp"

namespace planet {

// Plain (non-recorded) kernels shared by ops and evaluation code.
namespace kernels {
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
void softmax_inplace(std::span<double> row);
}  // namespace kernels

// Differentiable operations. All operands are rank-2 matrices on the same tape.

Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a + bias, bias is 1×cols broadcast over rows.
Var add_row(const Var& a, const Var& bias);
/// Row r of `a` times w(r, 0); w is rows×1.
Var scale_rows(const Var& a, const Var& w);

Var relu(const Var& a);
/// log σ(clamp(x, ±limit)); zero gradient outside the clamp.
Var log_sigmoid(const Var& a, double limit);

/// Sum of all entries → 1×1.
Var sum(const Var& a);
/// Mean of all entries → 1×1.
Var mean(const Var& a);
/// Column means → 1×cols.
Var column_mean(const Var& a);
/// Row-wise sum of squares → rows×1.
Var row_sq_norm(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Per-row standardization over the last dim (epsilon 1e-5) then affine.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Each row divided by (‖row‖₂ + eps).
Var normalize_rows(const Var& a, double eps = 1e-12);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
/// out.row(i) = a.row(index[i]); gradient scatters back.
Var gather_rows(const Var& a, const std::vector<std::size_t>& index);
/// out(i, 0) = a(i, index[i]).
Var pick(const Var& a, const std::vector<std::size_t>& index);
/// out(i, 0) = ⟨a.row(i), b.row(i)⟩.
Var row_dot(const Var& a, const Var& b);

/// Inverted dropout; identity unless the tape is in training mode with p > 0.
Var dropout(const Var& a, double p);
/// Stop-gradient. The value passes through the tape's FrozenChoices.
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace planet
