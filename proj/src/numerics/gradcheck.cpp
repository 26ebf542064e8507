// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace planet {

GradCheckReport check_gradients(ParameterStore& params, const LossBuilder& build, const GradCheckOptions& opts) {
  FrozenChoices frozen;
  frozen.record();
  params.zero_grad();
  {
    Tape tape;
    tape.frozen = &frozen;
    Var loss = build(tape);
    tape.backward(loss);
  }
  frozen.replay();

  auto eval = [&]() {
    frozen.replay();
    Tape tape;
    tape.frozen = &frozen;
    return build(tape).value().item();
  };

  GradCheckReport report;
  report.params = params.size();
  for (auto& p : params) {
    const std::size_t n = p->value.size();
    const std::size_t stride =
        (opts.max_entries_per_param == 0 || n <= opts.max_entries_per_param) ? 1 : (n + opts.max_entries_per_param - 1) / opts.max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p->value[i];
      p->value[i] = orig + opts.step;
      const double up = eval();
      p->value[i] = orig - opts.step;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double autodiff = (*p->grad)[i];
      const double scale = std::max(std::abs(autodiff), std::abs(numeric));
      const double err = std::abs(autodiff - numeric);
      ++report.checked;
      if (scale > opts.abs_floor) report.max_rel_error = std::max(report.max_rel_error, err / scale);
      if (err > std::max(opts.rel_tol * scale, opts.abs_floor)) {
        report.mismatches.push_back({p->name, i, autodiff, numeric});
      }
    }
  }
  frozen.off();
  return report;
}

}  // namespace planet
