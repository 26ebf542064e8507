// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "planet/edg/edg.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/gradcheck.hpp"
#include "planet/numerics/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace planet;
using namespace planet::testing;

namespace {

std::vector<double> row_of(const Tensor& t, std::size_t r) { return {t.row(r).begin(), t.row(r).end()}; }

// Sets the gate so that every input sees exactly these logits.
void pin_logits(ExpertBank& bank, const std::vector<double>& logits) {
  bank.gate.second.weight->value.fill(0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) bank.gate.second.bias->value(0, k) = logits[k];
}

}  // namespace

TEST_CASE("build_complement") {
  Tape tape;
  Rng rng(1);
  const Var text = tape.constant(testing::random_tensor(rng, 3, 2));
  const Var image = tape.constant(testing::random_tensor(rng, 3, 2));
  const Var audio = tape.constant(testing::random_tensor(rng, 3, 2));

  CHECK(build_complement({text, image}, 0).value() == image.value());
  CHECK(build_complement({text, image}, 1).value() == text.value());

  const Tensor c = build_complement({text, image, audio}, 1).value();
  REQUIRE(c.cols() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c(i, 0) == text.value()(i, 0));
    CHECK(c(i, 1) == text.value()(i, 1));
    CHECK(c(i, 2) == audio.value()(i, 0));
    CHECK(c(i, 3) == audio.value()(i, 1));
  }
  CHECK_THROWS_AS(build_complement({text}, 0), ContractError);
}

TEST_CASE("expert_mix") {
  Rng rng(3);
  Rng data(4);
  const Tensor n = testing::random_tensor(data, 5, 4);

  SUBCASE("single expert has gate one") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 1, 1, rng);
    testing::randomize_params(store, 5);
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(mix.weights.value()(i, 0) == 1.0);
      const auto ref = mlp_row(bank.experts[0], row_of(n, i));
      for (std::size_t c = 0; c < 3; ++c) CHECK(mix.output.value()(i, c) == doctest::Approx(ref[c]).epsilon(1e-12));
    }
  }

  SUBCASE("identical experts ignore the gate") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 3, 2, rng);
    testing::randomize_params(store, 6);
    for (std::size_t k = 1; k < 3; ++k) {
      bank.experts[k].first.weight->value = bank.experts[0].first.weight->value;
      bank.experts[k].first.bias->value = bank.experts[0].first.bias->value;
      bank.experts[k].second.weight->value = bank.experts[0].second.weight->value;
      bank.experts[k].second.bias->value = bank.experts[0].second.bias->value;
    }
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    for (std::size_t i = 0; i < 5; ++i) {
      const auto ref = mlp_row(bank.experts[0], row_of(n, i));
      for (std::size_t c = 0; c < 3; ++c) CHECK(mix.output.value()(i, c) == doctest::Approx(ref[c]).epsilon(1e-12));
    }
  }

  SUBCASE("logits [2,1,0] with top-2") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 3, 2, rng);
    testing::randomize_params(store, 7);
    pin_logits(bank, {2.0, 1.0, 0.0});
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    const double w0 = std::exp(2.0) / (std::exp(2.0) + std::exp(1.0));
    const double w1 = std::exp(1.0) / (std::exp(2.0) + std::exp(1.0));
    CHECK(w0 == doctest::Approx(0.7311).epsilon(1e-4));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(mix.weights.value()(i, 0) == doctest::Approx(w0).epsilon(1e-14));
      CHECK(mix.weights.value()(i, 1) == doctest::Approx(w1).epsilon(1e-14));
      CHECK(mix.weights.value()(i, 2) == 0.0);
      const auto e0 = mlp_row(bank.experts[0], row_of(n, i));
      const auto e1 = mlp_row(bank.experts[1], row_of(n, i));
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(mix.output.value()(i, c) - (w0 * e0[c] + w1 * e1[c])) <= 1e-12);
      }
    }
  }

  SUBCASE("tied logits keep the lower indices") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 4, 2, rng);
    pin_logits(bank, {0.5, 1.0, 1.0, 1.0});
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    CHECK(mix.weights.value()(0, 0) == 0.0);
    CHECK(mix.weights.value()(0, 1) == doctest::Approx(0.5));
    CHECK(mix.weights.value()(0, 2) == doctest::Approx(0.5));
    CHECK(mix.weights.value()(0, 3) == 0.0);
  }

  SUBCASE("k_top = K reproduces the plain softmax gate") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 3, 3, rng);
    testing::randomize_params(store, 8, 1.0);
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    for (std::size_t i = 0; i < 5; ++i) {
      const auto logits = mlp_row(bank.gate, row_of(n, i));
      double z = 0.0;
      for (double l : logits) z += std::exp(l);
      std::vector<double> ref(3, 0.0);
      for (std::size_t k = 0; k < 3; ++k) {
        const auto e = mlp_row(bank.experts[k], row_of(n, i));
        for (std::size_t c = 0; c < 3; ++c) ref[c] += std::exp(logits[k]) / z * e[c];
      }
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(mix.output.value()(i, c) - ref[c]) <= 1e-12);
    }
  }

  SUBCASE("weights are non-negative and sum to one") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 4, 2, rng);
    testing::randomize_params(store, 9, 2.0);
    Tape tape;
    const auto mix = expert_mix(tape, bank, tape.constant(n));
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (double w : mix.weights.value().row(i)) {
        CHECK(w >= 0.0);
        s += w;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }

  SUBCASE("k_top out of range") {
    ParameterStore store;
    CHECK_THROWS_AS(ExpertBank::create(store, "a", 4, 3, 3, 0, rng), ConfigError);
    CHECK_THROWS_AS(ExpertBank::create(store, "b", 4, 3, 3, 4, rng), ConfigError);
  }

  SUBCASE("top-k gate gradient with frozen selection") {
    ParameterStore store;
    auto bank = ExpertBank::create(store, "b", 4, 3, 4, 2, rng);
    testing::randomize_params(store, 10, 0.8);
    const Tensor w = testing::random_tensor(data, 5, 3);
    const auto report = check_gradients(store, [&](Tape& tape) {
      const auto mix = expert_mix(tape, bank, tape.constant(n));
      return sum(mul(mix.output, tape.constant(w)));
    });
    CHECK(report.ok());
  }
}

TEST_CASE("routing_stats") {
  SUBCASE("constant logits") {
    Tensor probs({6, 4}, 0.25);
    const auto s = routing_stats(probs);
    CHECK(s.fraction == std::vector<double>{1.0, 0.0, 0.0, 0.0});
    for (double p : s.mean_prob) CHECK(p == doctest::Approx(0.25));
  }
  SUBCASE("dominant expert") {
    Tensor probs = Tensor::zeros(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      probs(i, 0) = 0.01;
      probs(i, 1) = 0.98;
      probs(i, 2) = 0.01;
    }
    const auto s = routing_stats(probs);
    CHECK(s.fraction == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(s.mean_prob[1] == doctest::Approx(0.98));
  }
  SUBCASE("random logits spread evenly") {
    constexpr std::size_t kN = 10000;
    Rng rng(11);
    Tensor logits({kN, 4});
    for (auto& v : logits.data()) v = rng.normal();
    for (std::size_t i = 0; i < kN; ++i) kernels::softmax_inplace(logits.row(i));
    const auto s = routing_stats(logits);
    const double sigma = std::sqrt(0.25 * 0.75 / kN);
    double fsum = 0.0;
    double psum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(s.fraction[k] - 0.25) <= 4.0 * sigma);
      fsum += s.fraction[k];
      psum += s.mean_prob[k];
    }
    CHECK(fsum == doctest::Approx(1.0));
    CHECK(psum == doctest::Approx(1.0));
  }
  SUBCASE("empty batch") { CHECK_THROWS_AS(routing_stats(Tensor::zeros(0, 3)), ContractError); }
}

TEST_CASE("edg_forward") {
  const auto adj = Adjacency::from_edges(6, std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}, {1, 4}});
  Rng data(20);
  const Tensor a = testing::random_tensor(data, 6, 4);
  const Tensor b = testing::random_tensor(data, 6, 4);

  SUBCASE("no layers is the identity") {
    ParameterStore store;
    Rng rng(1);
    auto stack = EdgStack::create(store, "edg", 2, 4, 0, 2, 3, 2, rng);
    Tape tape;
    const auto out = edg_forward(tape, stack, {tape.constant(a), tape.constant(b)}, adj);
    CHECK(out.states[0].value() == a);
    CHECK(out.states[1].value() == b);
    CHECK(out.mixes.empty());
  }

  SUBCASE("zero partner state reduces to the LN-FFN chain, d=2") {
    ParameterStore store;
    Rng rng(2);
    auto stack = EdgStack::create(store, "edg", 2, 2, 1, 1, 2, 2, rng);
    const Tensor h = testing::random_tensor(data, 6, 2);
    Tape tape;
    const auto out = edg_forward(tape, stack, {tape.constant(h), tape.constant(Tensor::zeros(6, 2))}, adj);
    const auto& ffn = stack.layers[0].attention[0].ffn;
    for (std::size_t i = 0; i < 6; ++i) {
      // A two-entry layer norm maps (x, y) to ±(1, -1) scaled by |x-y|/sqrt((x-y)^2/4 + eps).
      auto ln2 = [](std::vector<double> x) {
        const double mu = 0.5 * (x[0] + x[1]);
        const double var = 0.25 * (x[0] - x[1]) * (x[0] - x[1]);
        for (double& v : x) v = (v - mu) / std::sqrt(var + 1e-5);
        return x;
      };
      const auto h1 = ln2(row_of(h, i));
      const auto f = mlp_row(ffn, h1);
      const auto ref = ln2({h1[0] + f[0], h1[1] + f[1]});
      CHECK(std::abs(out.states[0].value()(i, 0) - ref[0]) <= 1e-12);
      CHECK(std::abs(out.states[0].value()(i, 1) - ref[1]) <= 1e-12);
    }
  }

  SUBCASE("partner modality changes the output") {
    ParameterStore store;
    Rng rng(3);
    auto stack = EdgStack::create(store, "edg", 2, 4, 2, 2, 3, 2, rng);
    testing::randomize_params(store, 30);
    Tape tape;
    const auto full = edg_forward(tape, stack, {tape.constant(a), tape.constant(b)}, adj);
    const auto zeroed = edg_forward(tape, stack, {tape.constant(a), tape.constant(Tensor::zeros(6, 4))}, adj);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(full.states[0].value()[i] - zeroed.states[0].value()[i]);
    CHECK(diff > 1e-6);
    CHECK(full.mixes.size() == 4);
  }

  SUBCASE("modality registration order with permuted expert weights") {
    // Three modalities; target 0 sees complement [1, 2] or [2, 1].
    ParameterStore s1;
    ParameterStore s2;
    Rng r1(4);
    Rng r2(4);
    auto bank1 = ExpertBank::create(s1, "b", 4, 2, 3, 2, r1);
    auto bank2 = ExpertBank::create(s2, "b", 4, 2, 3, 2, r2);
    testing::randomize_params(s1, 40);
    testing::randomize_params(s2, 40);
    auto swap_halves = [](Tensor& w) {
      for (std::size_t c = 0; c < w.cols(); ++c) {
        std::swap(w(0, c), w(2, c));
        std::swap(w(1, c), w(3, c));
      }
    };
    for (auto& e : bank2.experts) swap_halves(e.first.weight->value);
    swap_halves(bank2.gate.first.weight->value);
    const Tensor m0 = testing::random_tensor(data, 6, 2);
    const Tensor m1 = testing::random_tensor(data, 6, 2);
    const Tensor m2 = testing::random_tensor(data, 6, 2);
    Tape tape;
    const auto e1 = expert_mix(tape, bank1,
                               build_complement({tape.constant(m0), tape.constant(m1), tape.constant(m2)}, 0));
    const auto e2 = expert_mix(tape, bank2,
                               build_complement({tape.constant(m0), tape.constant(m2), tape.constant(m1)}, 0));
    CHECK(testing::max_rel_diff(e1.output.value(), e2.output.value()) <= 1e-12);
  }

  SUBCASE("gating gradient matches finite differences on six nodes") {
    ParameterStore store;
    Rng rng(5);
    auto stack = EdgStack::create(store, "edg", 2, 4, 1, 2, 3, 3, rng);
    testing::randomize_params(store, 50);
    const Tensor w0 = testing::random_tensor(data, 6, 4);
    const Tensor w1 = testing::random_tensor(data, 6, 4);
    const auto report = check_gradients(store, [&](Tape& tape) {
      const auto out = edg_forward(tape, stack, {tape.constant(a), tape.constant(b)}, adj);
      return sum(mul(out.states[0], tape.constant(w0))) + sum(mul(out.states[1], tape.constant(w1)));
    });
    CHECK(report.ok());
    CHECK(report.max_rel_error < 1e-4);
  }

  SUBCASE("single modality stack is rejected") {
    ParameterStore store;
    Rng rng(6);
    CHECK_THROWS_AS(EdgStack::create(store, "edg", 1, 4, 1, 2, 3, 2, rng), ContractError);
  }
}
