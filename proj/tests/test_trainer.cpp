// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "planet/magdata/generators.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/hash.hpp"
#include "planet/trainer/config.hpp"
#include "planet/trainer/trainer.hpp"
#include "test_util.hpp"

using namespace planet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(std::size_t steps = 6) {
  TrainConfig c = desk_profile();
  c.epochs = 1;
  c.steps_per_epoch = steps;
  c.batch_size = 6;
  c.model.dim = 8;
  c.model.num_layers = 1;
  c.model.heads = 2;
  c.model.codebook_size = 16;
  c.seed = 17;
  return c;
}

MultimodalGraph small_sbm(std::uint64_t seed, std::size_t per_block = 20) {
  SbmSpec spec;
  spec.block_sizes = {per_block, per_block};
  spec.dims = {6, 5};
  return gen_sbm_mag(seed, spec);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("planet_test_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("flat config grammar") {
  const auto cfg = FlatConfig::parse(
      "# comment line\n"
      "train.lr = 0.002   # trailing comment\n"
      "model.interaction = false\n"
      "profile = \"desk\"\n"
      "train.dataset_weights = [1, 2.5]\n"
      "\n");
  CHECK(cfg.get_double("train.lr", 0) == 0.002);
  CHECK_FALSE(cfg.get_bool("model.interaction", true));
  CHECK(cfg.get_string("profile", "") == "desk");
  CHECK(cfg.get_doubles("train.dataset_weights", {}) == std::vector<double>{1.0, 2.5});
  CHECK(cfg.get_double("missing", 7.0) == 7.0);

  CHECK_THROWS_AS(FlatConfig::parse("train.lr = 1\ntrain.lr = 2\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse("train.lr 1\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse("train.lr = \"open\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse("bad key = 1\n"), ConfigError);
}

TEST_CASE("train config resolution and validation") {
  auto flat = FlatConfig::parse("profile = \"paper\"\ntrain.epochs = 2\n");
  flat.set_override("train.batch_size=4");
  const auto tc = TrainConfig::from_flat(flat);
  CHECK(tc.epochs == 2);
  CHECK(tc.batch_size == 4);
  CHECK(tc.lr == 4e-5);
  CHECK(tc.model.codebook_size == 20480);
  CHECK(tc.model.dim == 768);

  CHECK_THROWS_AS(TrainConfig::from_flat(FlatConfig::parse("train.epoch = 2\n")), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_flat(FlatConfig::parse("profile = \"huge\"\n")), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_flat(FlatConfig::parse("train.lr = -1\n")), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_flat(FlatConfig::parse("model.top_k = 9\n")), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_flat(FlatConfig::parse("mask.node_p = 1.5\n")), ConfigError);
  CHECK_THROWS_AS(FlatConfig().set_override("no_equals_sign"), ConfigError);
}

TEST_CASE("lr = 0 leaves every parameter bit-identical") {
  const auto g = small_sbm(1);
  TrainConfig c = tiny_config(4);
  c.lr = 0.0;
  PlanetModel fresh(
      [&] {
        ModelConfig m = c.model;
        m.adopt_schema(g);
        return m;
      }(),
      Rng(c.seed).stream("model").next_u64());
  auto r = pretrain({&g}, c);
  // The codebook is overwritten by its data initialization, not by a step.
  const std::string tokens = r.model.codebook().tokens->name;
  for (const auto& p : fresh.params()) {
    if (p->name == tokens) continue;
    CHECK(r.model.params().find(p->name)->value == p->value);
  }
}

TEST_CASE("fixed-seed reruns are bit-identical") {
  const auto g = small_sbm(2);
  const TrainConfig c = tiny_config(5);
  const auto dir_a = scratch_dir("det_a"), dir_b = scratch_dir("det_b");
  PretrainOptions oa, ob;
  oa.out_dir = dir_a;
  ob.out_dir = dir_b;
  auto a = pretrain({&g}, c, oa);
  auto b = pretrain({&g}, c, ob);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t s = 0; s < a.steps.size(); ++s) {
    CHECK(a.steps[s].loss.total == b.steps[s].loss.total);
    CHECK(a.steps[s].loss.l_vq == b.steps[s].loss.l_vq);
  }
  CHECK(a.checkpoint_hash == b.checkpoint_hash);
  CHECK(a.checkpoint_hash.size() == 40);
  CHECK(read_file(dir_a / "metrics.csv") == read_file(dir_b / "metrics.csv"));
  CHECK(git_blob_hash(read_file(dir_a / "model.plnt")) == a.checkpoint_hash);

  TrainConfig other = c;
  other.seed = c.seed + 1;
  CHECK(pretrain({&g}, other).checkpoint_hash != a.checkpoint_hash);
}

TEST_CASE("pretrain artifacts follow the documented schema") {
  const auto g = small_sbm(3);
  const auto dir = scratch_dir("artifacts");
  PretrainOptions o;
  o.out_dir = dir;
  o.config_text = "train.epochs = 1\n";
  o.data_names = {"sbm"};
  auto r = pretrain({&g}, tiny_config(3), o);

  std::istringstream csv(read_file(dir / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,epoch,L_s,L_c,L_topo,L_gen,L_VQ,L_load,total,perplexity");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
  }
  CHECK(rows == 3);

  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["config_text"] == "train.epochs = 1\n");
  CHECK(manifest["final_checkpoint_hash"] == r.checkpoint_hash);
  CHECK(manifest.contains("epochs"));
}

TEST_CASE("weighted objective identity holds on every training step") {
  const auto g = small_sbm(4);
  TrainConfig c = tiny_config(8);
  const LossWeights w = c.weights;
  std::size_t seen = 0;
  PretrainOptions o;
  o.on_step = [&](const StepRecord& s, PlanetModel&) {
    const auto& b = s.loss;
    const double expect = w.feat * (b.l_s + w.inter * b.l_c) + w.topo * b.l_topo + w.gen * b.l_gen + w.vq * b.l_vq +
                          w.load * b.l_load;
    CHECK(std::abs(b.total - expect) <= 1e-10);
    CHECK(b.l_feat == doctest::Approx(b.l_s + w.inter * b.l_c).epsilon(1e-14));
    ++seen;
  };
  pretrain({&g}, c, o);
  CHECK(seen == 8);
}

TEST_CASE("schema mismatch between pre-training graphs") {
  const auto g = small_sbm(5);
  SbmSpec spec;
  spec.block_sizes = {10, 10};
  spec.dims = {3, 3};
  const auto h = gen_sbm_mag(5, spec);
  CHECK_THROWS_AS(pretrain({&g, &h}, tiny_config(1)), FormatError);
  CHECK_THROWS_AS(pretrain({}, tiny_config(1)), ContractError);
}

TEST_CASE("smoothed loss decreases on the synergy graph") {
  SynergySpec spec;
  spec.num_nodes = 400;
  spec.edge_density = 0.005;
  const auto data = gen_synergy_mag(spec, 3);
  TrainConfig c = desk_profile();
  c.seed = 3;
  auto r = pretrain({&data.graph}, c);
  REQUIRE(r.steps.size() == 200);
  auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 20; ++i) s += r.steps[i].loss.total;
    return s / 20.0;
  };
  CHECK(window(180) < window(0));
  CHECK(r.epochs.size() == 5);
  CHECK(r.epochs.back().codebook.perplexity > 0.0);
}

TEST_CASE("chunked embedding equals full-graph embedding") {
  const auto g = small_sbm(6, 15);
  auto r = pretrain({&g}, tiny_config(3));
  const Tensor full = embed(r.model, g);
  EmbedOptions chunked;
  chunked.chunk_size = 7;
  const Tensor parts = embed(r.model, g, chunked);
  REQUIRE(full.shape() == parts.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) worst = std::max(worst, std::abs(full[i] - parts[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("save/load round trip gives identical embeddings") {
  const auto g = small_sbm(7);
  auto r = pretrain({&g}, tiny_config(3));
  const auto path = scratch_dir("roundtrip") / "m.plnt";
  r.model.save(path);
  auto loaded = PlanetModel::load(path);
  CHECK(embed(loaded, g) == embed(r.model, g));
}

TEST_CASE("node probe recovers a separable label exactly") {
  Rng rng(4);
  Tensor emb({80, 3});
  std::vector<std::int32_t> labels(80);
  for (std::size_t i = 0; i < 80; ++i) {
    labels[i] = static_cast<std::int32_t>(i % 2);
    emb(i, 0) = (labels[i] ? 2.0 : -2.0) + 0.3 * rng.normal();
    emb(i, 1) = rng.normal();
    emb(i, 2) = rng.normal();
  }
  std::vector<std::size_t> train(50), test(30);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 50);
  const auto r = finetune_node_probe(emb, labels, 2, train, test);
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_f1 == 1.0);

  CHECK_THROWS_AS(finetune_node_probe(emb, {}, 2, train, test), FormatError);
  CHECK_THROWS_AS(finetune_node_probe(emb, labels, 2, {}, test), FormatError);
}

TEST_CASE("node probe on random labels stays near chance") {
  Rng rng(6);
  const std::size_t n = 1200;
  const Tensor emb = testing::random_tensor(rng, n, 4);
  std::vector<std::int32_t> labels(n);
  for (auto& y : labels) y = rng.bernoulli(0.5) ? 1 : 0;
  std::vector<std::size_t> train(n / 2), test(n / 2);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), n / 2);
  const auto r = finetune_node_probe(emb, labels, 2, train, test);
  const double sigma = std::sqrt(0.25 / static_cast<double>(test.size()));
  CHECK(std::abs(r.accuracy - 0.5) <= 4.0 * sigma);
}

TEST_CASE("probing leaves the backbone untouched") {
  const auto g = small_sbm(8);
  auto r = pretrain({&g}, tiny_config(2));
  const std::string before = git_blob_hash(encode_checkpoint(r.model.entries()));
  const Tensor emb = embed(r.model, g);
  finetune_node_probe(emb, g.labels(), g.num_classes(), g.nodes_in(Split::Train), g.nodes_in(Split::Test));
  ProbeConfig pc;
  pc.epochs = 20;
  finetune_link_probe(emb, g, pc);
  CHECK(git_blob_hash(encode_checkpoint(r.model.entries())) == before);
}

TEST_CASE("link probe output contract") {
  const auto g = small_sbm(9, 25);
  // Untrained backbone: only the output contract is checked here.
  ModelConfig m;
  m.adopt_schema(g);
  m.dim = 8;
  m.codebook_size = 8;
  PlanetModel model(m, 1);
  const auto r = finetune_link_probe(embed(model, g), g, ProbeConfig{});
  CHECK(r.test_edges >= 1);
  CHECK((r.mrr > 0.0 && r.mrr <= 1.0));
}

TEST_CASE("ranking and classification metrics") {
  CHECK(mean_reciprocal_rank({5.0, 3.0}, {{1.0, 2.0}, {0.0, -1.0}}) == 1.0);
  CHECK(mean_reciprocal_rank({1.0}, {{2.0, 0.0, 3.0}}) == doctest::Approx(1.0 / 3.0));
  // A tie ranks the positive behind the negative.
  CHECK(mean_reciprocal_rank({1.0}, {{1.0}}) == 0.5);

  const std::vector<std::size_t> truth{0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> pred{0, 1, 1, 1, 2, 0};
  CHECK(accuracy(pred, truth) == doctest::Approx(4.0 / 6.0));
  // Per class: F1_0 = 0.5, F1_1 = 0.8, F1_2 = 2/3.
  CHECK(macro_f1(pred, truth, 3) == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0));
  CHECK(macro_f1({0, 0}, {0, 0}, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(accuracy({0}, {0, 1}), ContractError);
}
