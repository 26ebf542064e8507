// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "planet/evallab/evallab.hpp"
#include "planet/magdata/generators.hpp"
#include "planet/numerics/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace planet;
using namespace planet::testing;

TEST_CASE("pushforward counts token assignments") {
  const auto point = pushforward({0, 0, 0});
  CHECK(point.support == std::vector<std::size_t>{0});
  CHECK(point.weights == std::vector<double>{1.0});

  const auto p = pushforward({0, 0, 1, 2});
  CHECK(p.support == std::vector<std::size_t>{0, 1, 2});
  CHECK(p.weights == std::vector<double>{0.5, 0.25, 0.25});

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::size_t> idx(1 + rng.index(50));
    for (auto& i : idx) i = rng.index(7);
    CHECK(pushforward(idx).total() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(pushforward({}).support.empty());
}

TEST_CASE("wasserstein1 closed forms") {
  Rng rng(5);
  const Tensor tokens = testing::random_tensor(rng, 6, 4);
  const DiscreteDistribution p{{1, 3, 4}, {0.2, 0.5, 0.3}};
  CHECK(wasserstein1(p, p, tokens) == doctest::Approx(0.0).epsilon(1e-12));

  double d2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) d2 += (tokens(2, k) - tokens(5, k)) * (tokens(2, k) - tokens(5, k));
  CHECK(wasserstein1({{2}, {1.0}}, {{5}, {1.0}}, tokens) == doctest::Approx(std::sqrt(d2)).epsilon(1e-12));

  CHECK_THROWS_AS(wasserstein1({{2}, {1.0}}, {{5}, {0.9}}, tokens), ContractError);
  CHECK_THROWS_AS(wasserstein1({{9}, {1.0}}, {{5}, {1.0}}, tokens), ContractError);
}

TEST_CASE("transport simplex matches exhaustive LP vertex enumeration") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.index(3), n = 1 + rng.index(3);
    const auto a = random_simplex(rng, m);
    const auto b = random_simplex(rng, n);
    Tensor cost({m, n});
    for (auto& c : cost.data()) c = rng.uniform(0.0, 3.0);
    const auto sol = solve_transport(a, b, cost);
    CHECK(sol.cost == doctest::Approx(lp_vertex_oracle(a, b, cost)).epsilon(1e-9));
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(sol.plan(i, j) >= 0.0);
        s += sol.plan(i, j);
      }
      CHECK(std::abs(s - a[i]) <= 1e-9);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += sol.plan(i, j);
      CHECK(std::abs(s - b[j]) <= 1e-9);
    }
  }
}

TEST_CASE("transport handles degenerate marginals") {
  // Equal-mass rows and columns make the north-west start degenerate.
  const std::vector<double> a{0.25, 0.25, 0.25, 0.25}, b{0.25, 0.25, 0.25, 0.25};
  Tensor cost({4, 4}, 1.0);
  for (std::size_t i = 0; i < 4; ++i) cost(i, (i + 1) % 4) = 0.0;
  const auto sol = solve_transport(a, b, cost);
  CHECK(sol.cost == doctest::Approx(0.0).epsilon(1e-12));

  const auto zero_rows = solve_transport({0.0, 1.0, 0.0}, {0.5, 0.5}, Tensor::from_rows({{9, 9}, {1, 2}, {9, 9}}));
  CHECK(zero_rows.cost == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS_AS(solve_transport({-0.5, 1.5}, {1.0}, Tensor({2, 1})), ContractError);
}

TEST_CASE("wasserstein1 metric axioms on random triples") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t c = 2 + rng.index(6);
    const Tensor tokens = testing::random_tensor(rng, c, 3);
    const auto p = random_distribution(rng, c), q = random_distribution(rng, c), r = random_distribution(rng, c);
    const double pq = wasserstein1(p, q, tokens), qp = wasserstein1(q, p, tokens);
    CHECK(std::abs(pq - qp) <= 1e-9);
    CHECK(wasserstein1(p, p, tokens) <= 1e-12);
    CHECK(pq >= 0.0);
    CHECK(pq <= wasserstein1(p, r, tokens) + wasserstein1(r, q, tokens) + 1e-9);
  }
  // Distinct distributions over distinct token vectors are at positive distance.
  const Tensor tokens = Tensor::from_rows({{0, 0}, {1, 0}});
  CHECK(wasserstein1({{0, 1}, {0.5, 0.5}}, {{0, 1}, {0.4, 0.6}}, tokens) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("fewshot: prototypes at orthogonal axes give perfect accuracy") {
  Tensor emb({40, 2});
  std::vector<std::int32_t> labels(40);
  for (std::size_t i = 0; i < 40; ++i) {
    labels[i] = static_cast<std::int32_t>(i % 2);
    emb(i, i % 2) = 1.0;
  }
  FewShotTask task;
  task.k_shot = 5;
  task.n_query = 10;
  const auto r = fewshot_eval(emb, labels, task);
  CHECK(r.mean == 1.0);
  CHECK(r.std == 0.0);
  CHECK(r.per_task.size() == task.n_task);
}

TEST_CASE("fewshot: identical embeddings resolve ties to the lowest class") {
  Tensor emb({60, 3}, 0.5);
  std::vector<std::int32_t> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<std::int32_t>(i % 3);
  FewShotTask task;
  task.n_way = 3;
  task.k_shot = 4;
  task.n_query = 6;
  const auto r = fewshot_eval(emb, labels, task);
  for (double a : r.per_task) CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("fewshot: 2-way 1-shot agrees with exhaustive prototype oracle") {
  // Class 0 and class 1 each have three hand-placed points; with one shot
  // and two queries per class, every task uses one of 9 support pairs.
  const Tensor emb = Tensor::from_rows({{1.0, 0.1}, {0.8, 0.7}, {0.2, 1.0}, {0.1, 1.0}, {0.9, 0.3}, {-0.2, 0.8}});
  const std::vector<std::int32_t> labels{0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> cls0{0, 1, 2}, cls1{3, 4, 5};

  auto cos = [&](std::size_t a, std::size_t b) {
    const double dot = emb(a, 0) * emb(b, 0) + emb(a, 1) * emb(b, 1);
    return dot / std::hypot(emb(a, 0), emb(a, 1)) / std::hypot(emb(b, 0), emb(b, 1));
  };
  std::vector<double> oracle;
  for (auto s0 : cls0) {
    for (auto s1 : cls1) {
      std::size_t hit = 0;
      for (auto q : cls0) {
        if (q != s0) hit += cos(q, s0) >= cos(q, s1) ? 1 : 0;
      }
      for (auto q : cls1) {
        if (q != s1) hit += cos(q, s1) > cos(q, s0) ? 1 : 0;
      }
      oracle.push_back(static_cast<double>(hit) / 4.0);
    }
  }
  const double oracle_mean = std::accumulate(oracle.begin(), oracle.end(), 0.0) / 9.0;
  double oracle_var = 0.0;
  for (double a : oracle) oracle_var += (a - oracle_mean) * (a - oracle_mean) / 9.0;

  FewShotTask task;
  task.k_shot = 1;
  task.n_query = 2;
  task.n_task = 4000;
  task.seed = 8;
  const auto r = fewshot_eval(emb, labels, task);
  for (double a : r.per_task) {
    const bool in_oracle =
        std::any_of(oracle.begin(), oracle.end(), [&](double o) { return std::abs(o - a) < 1e-15; });
    CHECK(in_oracle);
  }
  // Supports are uniform over the 9 pairs, so the mean concentrates on the oracle mean.
  CHECK(std::abs(r.mean - oracle_mean) <= 4.0 * std::sqrt(oracle_var / 4000.0) + 1e-12);
}

TEST_CASE("fewshot: determinism and contract errors") {
  Rng rng(2);
  const Tensor emb = testing::random_tensor(rng, 50, 4);
  std::vector<std::int32_t> labels(50);
  for (std::size_t i = 0; i < 50; ++i) labels[i] = static_cast<std::int32_t>(i % 5);
  FewShotTask task;
  task.n_way = 3;
  task.k_shot = 3;
  task.n_query = 5;
  task.seed = 4;
  CHECK(fewshot_eval(emb, labels, task).per_task == fewshot_eval(emb, labels, task).per_task);

  task.k_shot = 6;  // 11 needed, 10 available
  CHECK_THROWS_AS(fewshot_eval(emb, labels, task), FormatError);
  task.k_shot = 3;
  task.class_pool = {0, 1};
  CHECK_THROWS_AS(fewshot_eval(emb, labels, task), FormatError);
  task.n_way = 0;
  CHECK_THROWS_AS(fewshot_eval(emb, labels, task), ConfigError);
}

TEST_CASE("alignment report on an untrained model is finite") {
  SbmSpec spec;
  spec.block_sizes = {20, 20};
  const auto g = gen_sbm_mag(3, spec);
  ModelConfig cfg;
  cfg.adopt_schema(g);
  cfg.dim = 8;
  cfg.codebook_size = 16;
  PlanetModel model(cfg, 9);
  const auto r = alignment_report(model, g);
  REQUIRE(r.w1.size() == 2);
  CHECK(r.w1[r.anchor] == 0.0);
  for (double x : r.w1) CHECK(std::isfinite(x));
  for (double x : r.residual) CHECK((std::isfinite(x) && x >= 0.0));
  for (const auto& p : r.pushforward) CHECK(p.total() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::all_of(model.codebook().usage.begin(), model.codebook().usage.end(), [](auto u) { return u == 0; }));
  CHECK(r.to_json().contains("w1"));

  cfg.interaction = false;
  PlanetModel vanilla(cfg, 9);
  CHECK_THROWS_AS(alignment_report(vanilla, g), ContractError);
}

TEST_CASE("synergy experiment smoke run") {
  auto cfg = default_synergy_config();
  cfg.data.num_nodes = 120;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 3;
  cfg.probe.epochs = 20;
  const auto r = synergy_experiment(2, cfg);
  CHECK((r.acc_vanilla >= 0.0 && r.acc_vanilla <= 1.0));
  CHECK((r.acc_edg >= 0.0 && r.acc_edg <= 1.0));
  CHECK(r.to_json()["pass"].is_boolean());
}
