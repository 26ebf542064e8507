// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "planet/cli/cli.hpp"

namespace fs = std::filesystem;
using planet::cli::run;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("planet_test_cli_" + name);
  fs::remove_all(d);
  return d;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("cli: synth, pretrain twice, identical hashes") {
  const auto root = fresh_dir("pipeline");
  const auto graph = (root / "g" / "graph.mag").string();
  REQUIRE(call({"synth", "--kind", "sbm", "--seed", "3", "--out", (root / "g").string(), "--set", "sbm.blocks=[15,15]"})
              .code == 0);
  REQUIRE(fs::exists(graph));

  const auto cfg = root / "desk.toml";
  fs::create_directories(root);
  std::ofstream(cfg) << "# tiny\ntrain.epochs = 1\ntrain.steps_per_epoch = 3\nmodel.dim = 8\n";
  const auto a = call({"pretrain", "--config", cfg.string(), "--data", graph, "--seed", "1", "--out",
                       (root / "a").string()});
  const auto b = call({"pretrain", "--config", cfg.string(), "--data", graph, "--seed", "1", "--out",
                       (root / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  const auto manifest = read_json(root / "a" / "manifest.json");
  CHECK(manifest["config_text"] == "# tiny\ntrain.epochs = 1\ntrain.steps_per_epoch = 3\nmodel.dim = 8\n");
  CHECK(manifest["final_checkpoint_hash"].get<std::string>() + "\n" == a.out);

  const auto ckpt = (root / "a" / "model.plnt").string();
  const auto probe = call({"probe", "--checkpoint", ckpt, "--data", graph, "--out", (root / "probe").string()});
  CHECK(probe.code == 0);
  CHECK(read_json(root / "probe" / "report.json").contains("accuracy"));

  const auto few = call({"fewshot", "--checkpoint", ckpt, "--data", graph, "--k-shot", "3", "--n-query", "4", "--out",
                         (root / "few").string()});
  CHECK(few.code == 0);
  CHECK(read_json(root / "few" / "report.json")["per_task"].size() == 10);

  CHECK(call({"align-report", "--checkpoint", ckpt, "--data", graph, "--out", (root / "align").string()}).code == 0);
  CHECK(read_json(root / "align" / "report.json")["w1"].size() == 2);

  CHECK(call({"embed", "--checkpoint", ckpt, "--data", graph, "--out", (root / "emb").string()}).code == 0);
  std::ifstream emb(root / "emb" / "embeddings.csv");
  std::stringstream ss;
  ss << emb.rdbuf();
  CHECK(count_lines(ss.str()) == 30);
}

TEST_CASE("cli: exit codes and one-line diagnostics") {
  const auto root = fresh_dir("errors");
  const auto missing = call({"probe", "--checkpoint", "missing.plnt", "--data", "nope.mag", "--out", root.string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("missing.plnt") != std::string::npos);
  CHECK(count_lines(missing.err) == 1);

  const auto unknown_flag = call({"gradcheck", "--frobnicate"});
  CHECK(unknown_flag.code == 1);
  CHECK(count_lines(unknown_flag.err) == 1);

  const auto unknown_key = call({"synth", "--kind", "sbm", "--set", "sbm.colour=1", "--out", root.string()});
  CHECK(unknown_key.code == 1);
  CHECK(unknown_key.err.rfind("error: config:", 0) == 0);

  CHECK(call({"synth", "--kind", "lattice", "--out", root.string()}).code == 1);
  CHECK(call({}).code == 1);

  // A garbage graph file is a data error.
  fs::create_directories(root);
  std::ofstream(root / "bad.mag") << "not a graph";
  CHECK(call({"pretrain", "--data", (root / "bad.mag").string(), "--out", root.string()}).code == 2);
}

TEST_CASE("cli: divergence exits 3 and leaves a NaN dump") {
  const auto root = fresh_dir("nan");
  REQUIRE(call({"synth", "--kind", "sbm", "--out", (root / "g").string(), "--set", "sbm.blocks=[10,10]"}).code == 0);
  const auto r = call({"pretrain", "--data", (root / "g" / "graph.mag").string(), "--out", (root / "run").string(),
                       "--set", "train.lr=1e200", "--set", "train.epochs=1"});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: numerical:", 0) == 0);
  CHECK(fs::exists(root / "run" / "nan_dump.json"));
}

TEST_CASE("cli: synergy writes its report") {
  const auto root = fresh_dir("synergy");
  const auto r = call({"synergy", "--seed", "7", "--out", root.string(), "--set", "synergy.epochs=1", "--set",
                       "synergy.nodes=150"});
  REQUIRE(r.code == 0);
  const auto report = read_json(root / "report.json");
  for (const char* key : {"acc_vanilla", "acc_edg", "pass_vanilla", "pass_edg", "pass_gap", "pass"}) {
    CHECK(report.contains(key));
  }
}

TEST_CASE("cli: gradcheck passes") {
  const auto root = fresh_dir("grad");
  const auto r = call({"gradcheck", "--seed", "2", "--out", root.string()});
  CHECK(r.code == 0);
  CHECK(read_json(root / "report.json")["pass"] == true);
}
