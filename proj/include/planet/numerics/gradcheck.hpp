// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "planet/numerics/tape.hpp"

namespace planet {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
  /// Check at most this many entries per parameter (0 = all), evenly strided.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckMismatch {
  std::string param;
  std::size_t index = 0;
  double autodiff = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t params = 0;
  double max_rel_error = 0.0;
  std::vector<GradCheckMismatch> mismatches;
  [[nodiscard]] bool ok() const { return mismatches.empty(); }
};

/// Builds the scalar loss on a fresh tape. The tape's `frozen` pointer is set
/// by the checker before the call; the callback must not reset it.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients against central finite differences for every
/// parameter entry of `params`.
///
/// Stop-gradient operands and discrete selections are recorded on the first
/// evaluation and replayed for every perturbed one, so the numeric
/// derivative is taken of the same surrogate function the tape
/// differentiates. An entry passes if
/// |autodiff − numeric| <= max(rel_tol · max(|autodiff|, |numeric|), abs_floor).
GradCheckReport check_gradients(ParameterStore& params, const LossBuilder& build, const GradCheckOptions& opts = {});

}  // namespace planet
