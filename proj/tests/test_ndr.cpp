// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <limits>

#include "planet/ndr/ndr.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/gradcheck.hpp"
#include "planet/numerics/ops.hpp"
#include "test_util.hpp"

using namespace planet;

namespace {

Codebook make_codebook(ParameterStore& store, std::size_t c, std::size_t d, std::uint64_t seed = 1) {
  Rng rng(seed);
  return Codebook::create(store, "dsrs", c, d, rng);
}

bool is_codebook_row(const Tensor& tokens, std::span<const double> row) {
  for (std::size_t j = 0; j < tokens.rows(); ++j) {
    const auto s = tokens.row(j);
    if (std::equal(s.begin(), s.end(), row.begin())) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("quantize") {
  ParameterStore store;
  auto cb = make_codebook(store, 16, 4);
  const Tensor& s = cb.tokens->value;

  SUBCASE("exact token maps to itself") {
    Tensor h({1, 4});
    std::copy(s.row(3).begin(), s.row(3).end(), h.row(0).begin());
    Tape tape;
    const auto q = quantize(tape, cb, tape.constant(h));
    CHECK(q.index == std::vector<std::size_t>{3});
    CHECK(std::equal(s.row(3).begin(), s.row(3).end(), q.quantized.value().row(0).begin()));
  }

  SUBCASE("equidistant input takes the lower index") {
    ParameterStore st;
    auto two = make_codebook(st, 2, 2);
    two.tokens->value = Tensor::from_rows({{1.0, 0.0}, {-1.0, 0.0}});
    Tape tape;
    const auto q = quantize(tape, two, tape.constant(Tensor::from_rows({{0.0, 5.0}})));
    CHECK(q.index == std::vector<std::size_t>{0});
  }

  SUBCASE("matches a brute-force double loop on 64 rows") {
    Rng rng(5);
    const Tensor h = testing::random_tensor(rng, 64, 4, 2.0);
    Tape tape;
    cb.reset_usage();
    const auto q = quantize(tape, cb, tape.constant(h));
    for (std::size_t i = 0; i < 64; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < 16; ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < 4; ++c) d += std::pow(s(j, c) - h(i, c), 2);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      CHECK(q.index[i] == best);
      CHECK(is_codebook_row(s, q.quantized.value().row(i)));
    }
    std::size_t total = 0;
    for (auto u : cb.usage) total += u;
    CHECK(total == 64);
  }

  SUBCASE("straight-through gradient routing") {
    ParameterStore st;
    auto book = make_codebook(st, 3, 2);
    Parameter& hp = st.add("h", Tensor::from_rows({{0.1, 0.2}, {5.0, 5.0}, {0.0, 0.3}}));
    book.tokens->value = Tensor::from_rows({{0.0, 0.0}, {4.0, 4.0}, {-9.0, -9.0}});
    const Tensor w = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    for (bool st_flag : {true, false}) {
      st.zero_grad();
      Tape tape;
      const auto q = quantize(tape, book, tape.parameter(hp), st_flag);
      tape.backward(sum(mul(q.quantized, tape.constant(w))));
      // Rows 0 and 2 share token 0, row 1 uses token 1, token 2 is unused.
      CHECK(*book.tokens->grad == Tensor::from_rows({{6.0, 8.0}, {3.0, 4.0}, {0.0, 0.0}}));
      CHECK(*hp.grad == (st_flag ? w : Tensor::zeros(3, 2)));
    }
  }

  SUBCASE("data-dependent init copies the first rows") {
    Rng rng(6);
    const Tensor h = testing::random_tensor(rng, 5, 4);
    const Tensor before = s;
    cb.init_from_batch(h);
    CHECK(cb.initialized);
    for (std::size_t r = 0; r < 5; ++r) CHECK(std::equal(h.row(r).begin(), h.row(r).end(), s.row(r).begin()));
    CHECK(std::equal(before.row(5).begin(), before.row(5).end(), s.row(5).begin()));
  }
}

TEST_CASE("general_knowledge_loss") {
  SUBCASE("single node gives zero") {
    Tape tape;
    Rng rng(1);
    const Var t = tape.constant(testing::random_tensor(rng, 1, 3));
    const Var i = tape.constant(testing::random_tensor(rng, 1, 3));
    CHECK(std::abs(general_knowledge_loss({t, i}, 0, 0.93).value()[0]) <= 1e-15);
  }

  SUBCASE("orthogonal identical rows, tau = 1") {
    Tape tape;
    const Tensor q = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const double got = general_knowledge_loss({tape.constant(q), tape.constant(q)}, 0, 1.0).value()[0];
    const double e = std::exp(1.0);
    CHECK(got == doctest::Approx(-2.0 * std::log(e / (e + 1.0))).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.6265).epsilon(1e-4));
  }

  Rng rng(2);
  const Tensor t = testing::random_tensor(rng, 6, 4);
  const Tensor a = testing::random_tensor(rng, 6, 4);
  const Tensor b = testing::random_tensor(rng, 6, 4);
  auto eval = [](const Tensor& x, const Tensor& y, const Tensor& z) {
    Tape tape;
    return general_knowledge_loss({tape.constant(x), tape.constant(y), tape.constant(z)}, 0, 0.93).value()[0];
  };
  const double base = eval(t, a, b);

  SUBCASE("scaling rows leaves the loss unchanged") {
    CHECK(eval(testing::scale_copy(t, 10.0), testing::scale_copy(a, 10.0), b) == doctest::Approx(base).epsilon(1e-10));
  }

  SUBCASE("common node permutation leaves the loss unchanged") {
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    auto permute = [&](const Tensor& x) {
      Tensor y(x.shape());
      for (std::size_t i = 0; i < perm.size(); ++i) std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), y.row(i).begin());
      return y;
    };
    CHECK(eval(permute(t), permute(a), permute(b)) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("matches a direct evaluation of the two log-ratio sums") {
    auto cosine = [](std::span<const double> x, std::span<const double> y) {
      double xy = 0, xx = 0, yy = 0;
      for (std::size_t c = 0; c < x.size(); ++c) {
        xy += x[c] * y[c];
        xx += x[c] * x[c];
        yy += y[c] * y[c];
      }
      return xy / ((std::sqrt(xx) + 1e-12) * (std::sqrt(yy) + 1e-12));
    };
    double ref = 0.0;
    for (const Tensor* other : {&a, &b}) {
      for (std::size_t i = 0; i < 6; ++i) {
        double row = 0.0;
        double col = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          row += std::exp(cosine(t.row(i), other->row(j)) / 0.93);
          col += std::exp(cosine(t.row(j), other->row(i)) / 0.93);
        }
        const double zii = std::exp(cosine(t.row(i), other->row(i)) / 0.93);
        ref += std::log(zii / row) + std::log(zii / col);
      }
    }
    ref = -ref / (6.0 * 2.0);
    CHECK(base == doctest::Approx(ref).epsilon(1e-12));
  }

  SUBCASE("gradient matches finite differences") {
    ParameterStore store;
    Parameter& pt = store.add("t", t);
    Parameter& pa = store.add("a", a);
    const auto report = check_gradients(store, [&](Tape& tape) {
      return general_knowledge_loss({tape.parameter(pt), tape.parameter(pa)}, 0, 0.5);
    });
    CHECK(report.ok());
  }

  SUBCASE("single modality is rejected") {
    Tape tape;
    CHECK_THROWS_AS(general_knowledge_loss({tape.constant(t)}, 0, 1.0), ContractError);
  }
}

TEST_CASE("vq_loss") {
  SUBCASE("encoder output on its token gives zero") {
    ParameterStore store;
    auto cb = make_codebook(store, 4, 3);
    Tensor h({2, 3});
    std::copy(cb.tokens->value.row(1).begin(), cb.tokens->value.row(1).end(), h.row(0).begin());
    std::copy(cb.tokens->value.row(2).begin(), cb.tokens->value.row(2).end(), h.row(1).begin());
    Tape tape;
    const Var hv = tape.constant(h);
    const auto q = quantize(tape, cb, hv);
    CHECK(vq_loss(tape, cb, {hv}, {q}).value()[0] == 0.0);
  }

  SUBCASE("single point at distance one") {
    ParameterStore store;
    auto cb = make_codebook(store, 1, 2);
    cb.tokens->value = Tensor::from_rows({{0.0, 0.0}});
    Tape tape;
    const Var hv = tape.constant(Tensor::from_rows({{0.6, 0.8}}));
    const auto q = quantize(tape, cb, hv);
    CHECK(vq_loss(tape, cb, {hv}, {q}).value()[0] == doctest::Approx(1.25).epsilon(1e-14));
  }

  SUBCASE("gradient routing through the stop-gradients") {
    ParameterStore store;
    auto cb = make_codebook(store, 5, 3, 7);
    Rng rng(8);
    Parameter& h0 = store.add("h0", testing::random_tensor(rng, 4, 3));
    Parameter& h1 = store.add("h1", testing::random_tensor(rng, 4, 3));
    auto build = [&](Tape& tape) {
      const Var a = tape.parameter(h0);
      const Var b = tape.parameter(h1);
      const auto qa = quantize(tape, cb, a);
      const auto qb = quantize(tape, cb, b);
      return vq_loss(tape, cb, {a, b}, {qa, qb});
    };
    store.zero_grad();
    {
      Tape tape;
      const Var loss = build(tape);
      CHECK(loss.value()[0] >= 0.0);
      tape.backward(loss);
    }
    const Tensor& s = cb.tokens->value;
    Tensor expect_s(s.shape());
    for (Parameter* hp : {&h0, &h1}) {
      const auto idx = nearest_tokens(s, hp->value);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double diff = hp->value(i, c) - s(idx[i], c);
          CHECK((*hp->grad)(i, c) == doctest::Approx(2.0 * diff / 4.0).epsilon(1e-12));
          expect_s(idx[i], c) += 2.0 * 0.25 * (-diff) / 4.0;
        }
      }
    }
    CHECK(testing::max_rel_diff(*cb.tokens->grad, expect_s) <= 1e-12);
    CHECK(check_gradients(store, build).ok());
  }
}

TEST_CASE("codebook_report") {
  const auto uniform = codebook_report(std::vector<std::size_t>{3, 3, 3, 3, 3});
  CHECK(uniform.perplexity == doctest::Approx(5.0));
  CHECK(uniform.dead == 0);

  const auto collapsed = codebook_report(std::vector<std::size_t>{0, 9, 0, 0});
  CHECK(collapsed.perplexity == doctest::Approx(1.0));
  CHECK(collapsed.dead == 3);

  const auto half = codebook_report(std::vector<std::size_t>{2, 2, 0, 0});
  CHECK(half.perplexity == doctest::Approx(2.0));
  CHECK(half.dead == 2);
}
