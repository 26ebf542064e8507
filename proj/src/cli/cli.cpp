// SPDX-License-Identifier: Apache-2.0
#include "planet/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "planet/evallab/evallab.hpp"
#include "planet/magdata/generators.hpp"
#include "planet/magdata/io.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/hash.hpp"
#include "planet/trainer/config.hpp"
#include "planet/trainer/trainer.hpp"

namespace planet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  fs::path out = "planet_out";
  fs::path config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  cmd->add_option("--seed", c.seed, "Seed for every random choice of the command");
  cmd->add_option("--out", c.out, "Output directory");
  if (with_config) {
    cmd->add_option("--config", c.config, "Flat key = value config file");
    cmd->add_option("--set", c.overrides, "Override one config key (key=value), repeatable");
  }
}

// File text plus overrides. Unknown keys are rejected before any work,
// either here or by TrainConfig::from_flat when `known` is empty.
FlatConfig load_config(const Common& c, const std::vector<std::string>& known) {
  FlatConfig flat;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw ConfigError("config file not found: " + c.config.string());
    flat = FlatConfig::load(c.config);
  }
  for (const auto& o : c.overrides) flat.set_override(o);
  if (!known.empty()) flat.require_known(known);
  return flat;
}

std::vector<std::string> probe_keys() {
  return {"probe.hidden", "probe.epochs", "probe.lr", "probe.weight_decay", "probe.standardize",
          "link.test_fraction", "link.negatives"};
}

ProbeConfig probe_config(const FlatConfig& flat, std::uint64_t seed) {
  ProbeConfig p;
  p.hidden = flat.get_uint("probe.hidden", p.hidden);
  p.epochs = flat.get_uint("probe.epochs", p.epochs);
  p.lr = flat.get_double("probe.lr", p.lr);
  p.weight_decay = flat.get_double("probe.weight_decay", p.weight_decay);
  p.standardize = flat.get_bool("probe.standardize", p.standardize);
  p.seed = seed;
  if (p.epochs == 0) throw ConfigError("probe.epochs must be positive");
  if (!(p.lr > 0.0)) throw ConfigError("probe.lr must be positive");
  if (!(p.weight_decay >= 0.0)) throw ConfigError("probe.weight_decay must be non-negative");
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot write " + p.string());
  f << text;
  if (!f) throw FormatError("write failed for " + p.string());
}

void write_report(const Common& c, const json& report) { write_text(c.out / "report.json", report.dump(2) + "\n"); }

MultimodalGraph load_data(const fs::path& p) {
  if (!fs::exists(p)) throw FormatError("data file not found: " + p.string());
  return load_graph(p);
}

PlanetModel load_model(const fs::path& p) {
  if (!fs::exists(p)) throw FormatError("checkpoint not found: " + p.string());
  return PlanetModel::load(p);
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const Common& c, const std::string& kind, std::ostream& out) {
  MultimodalGraph g;
  json params;
  if (kind == "sbm") {
    const auto flat = load_config(c, {"sbm.blocks", "sbm.p_in", "sbm.p_out", "sbm.dims", "sbm.noise",
                                      "sbm.mean_scale", "sbm.anchor"});
    SbmSpec spec;
    auto to_sizes = [](const std::vector<double>& v, const char* key) {
      std::vector<std::size_t> s;
      for (double x : v) {
        if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError(std::string(key) + " entries must be positive integers");
        s.push_back(static_cast<std::size_t>(x));
      }
      return s;
    };
    std::vector<double> blocks(spec.block_sizes.begin(), spec.block_sizes.end());
    std::vector<double> dims(spec.dims.begin(), spec.dims.end());
    spec.block_sizes = to_sizes(flat.get_doubles("sbm.blocks", blocks), "sbm.blocks");
    spec.dims = to_sizes(flat.get_doubles("sbm.dims", dims), "sbm.dims");
    spec.p_in = flat.get_double("sbm.p_in", spec.p_in);
    spec.p_out = flat.get_double("sbm.p_out", spec.p_out);
    spec.noise = flat.get_double("sbm.noise", spec.noise);
    spec.mean_scale = flat.get_double("sbm.mean_scale", spec.mean_scale);
    spec.anchor = flat.get_uint("sbm.anchor", spec.anchor);
    spec.modality_names.clear();
    for (std::size_t m = 0; m < spec.dims.size(); ++m) spec.modality_names.push_back("m" + std::to_string(m));
    if (spec.dims.size() == 2) spec.modality_names = {"text", "image"};
    g = gen_sbm_mag(c.seed, spec);
    params = flat.values();
  } else {
    const auto flat = load_config(c, {"synergy.nodes", "synergy.density", "synergy.noise", "synergy.unique_dims",
                                      "synergy.mode"});
    SynergySpec spec;
    spec.num_nodes = flat.get_uint("synergy.nodes", spec.num_nodes);
    spec.edge_density = flat.get_double("synergy.density", spec.edge_density);
    spec.noise = flat.get_double("synergy.noise", spec.noise);
    spec.unique_dims = flat.get_uint("synergy.unique_dims", spec.unique_dims);
    const auto mode = flat.get_string("synergy.mode", "within");
    if (mode == "within") {
      spec.mode = SynergyMode::WithinNode;
    } else if (mode == "neighbor") {
      spec.mode = SynergyMode::Neighbor;
    } else {
      throw ConfigError("synergy.mode must be \"within\" or \"neighbor\"");
    }
    if (!(spec.noise >= 0.0)) throw ConfigError("synergy.noise must be non-negative");
    g = gen_synergy_mag(spec, c.seed).graph;
    params = flat.values();
  }
  const fs::path path = c.out / "graph.mag";
  fs::create_directories(c.out);
  save_graph(g, path);
  write_text(c.out / "manifest.json", json{{"command", "synth"},
                                           {"kind", kind},
                                           {"seed", c.seed},
                                           {"params", params},
                                           {"nodes", g.num_nodes()},
                                           {"edges", g.num_edges()},
                                           {"graph_hash", git_blob_hash(read_text(path))}}
                                          .dump(2) + "\n");
  out << path.string() << "\n";
  return kOk;
}

int cmd_pretrain(const Common& c, const std::vector<fs::path>& data, std::ostream& out) {
  const auto flat = load_config(c, {});
  TrainConfig tc = TrainConfig::from_flat(flat);
  tc.seed = c.seed;
  tc.validate();
  std::vector<MultimodalGraph> graphs;
  for (const auto& p : data) graphs.push_back(load_data(p));
  std::vector<const MultimodalGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  PretrainOptions opts;
  opts.out_dir = c.out;
  opts.config_text = c.config.empty() ? std::string() : read_text(c.config);
  for (const auto& p : data) opts.data_names.push_back(p.string());
  const auto r = pretrain(ptrs, tc, opts);
  out << r.checkpoint_hash << "\n";
  return kOk;
}

int cmd_embed(const Common& c, const fs::path& checkpoint, const fs::path& data, std::size_t chunk, std::ostream& out) {
  auto model = load_model(checkpoint);
  const auto g = load_data(data);
  EmbedOptions eo;
  eo.chunk_size = chunk;
  const Tensor e = embed(model, g, eo);
  std::ostringstream csv;
  csv << std::setprecision(17);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    for (std::size_t j = 0; j < e.cols(); ++j) csv << (j ? "," : "") << e(i, j);
    csv << "\n";
  }
  write_text(c.out / "embeddings.csv", csv.str());
  write_report(c, {{"command", "embed"},
                   {"checkpoint", checkpoint.string()},
                   {"data", data.string()},
                   {"rows", e.rows()},
                   {"cols", e.cols()},
                   {"chunk_size", chunk}});
  out << (c.out / "embeddings.csv").string() << "\n";
  return kOk;
}

int cmd_probe(const Common& c, const fs::path& checkpoint, const fs::path& data, const std::string& task,
              std::ostream& out) {
  const auto flat = load_config(c, probe_keys());
  const ProbeConfig pc = probe_config(flat, c.seed);
  auto model = load_model(checkpoint);
  const auto g = load_data(data);
  const Tensor e = embed(model, g);
  json report{{"command", "probe"}, {"task", task}, {"checkpoint", checkpoint.string()}, {"data", data.string()},
              {"seed", c.seed}, {"config", flat.values()}};
  if (task == "node") {
    if (!g.has_labels() || !g.has_splits()) throw FormatError("probe: " + data.string() + " has no labels or splits");
    const auto r = finetune_node_probe(e, g.labels(), g.num_classes(), g.nodes_in(Split::Train),
                                       g.nodes_in(Split::Test), pc);
    report["accuracy"] = r.accuracy;
    report["macro_f1"] = r.macro_f1;
    out << "accuracy " << r.accuracy << " macro_f1 " << r.macro_f1 << "\n";
  } else {
    LinkProbeOptions lo;
    lo.test_fraction = flat.get_double("link.test_fraction", lo.test_fraction);
    lo.negatives_per_positive = flat.get_uint("link.negatives", lo.negatives_per_positive);
    if (!(lo.test_fraction > 0.0 && lo.test_fraction < 1.0)) throw ConfigError("link.test_fraction must be in (0, 1)");
    if (lo.negatives_per_positive == 0) throw ConfigError("link.negatives must be positive");
    const auto r = finetune_link_probe(e, g, pc, lo);
    report["mrr"] = r.mrr;
    report["test_edges"] = r.test_edges;
    out << "mrr " << r.mrr << "\n";
  }
  write_report(c, report);
  return kOk;
}

int cmd_fewshot(const Common& c, const fs::path& checkpoint, const fs::path& data, FewShotTask task,
                std::ostream& out) {
  auto model = load_model(checkpoint);
  const auto g = load_data(data);
  if (!g.has_labels()) throw FormatError("fewshot: " + data.string() + " has no labels");
  task.seed = c.seed;
  const auto r = fewshot_eval(embed(model, g), g.labels(), task);
  write_report(c, {{"command", "fewshot"},
                   {"checkpoint", checkpoint.string()},
                   {"data", data.string()},
                   {"seed", c.seed},
                   {"n_way", task.n_way},
                   {"k_shot", task.k_shot},
                   {"n_query", task.n_query},
                   {"n_task", task.n_task},
                   {"mean", r.mean},
                   {"std", r.std},
                   {"per_task", r.per_task}});
  out << "accuracy " << r.mean << " +- " << r.std << "\n";
  return kOk;
}

int cmd_align(const Common& c, const fs::path& checkpoint, const fs::path& data, std::ostream& out) {
  auto model = load_model(checkpoint);
  const auto g = load_data(data);
  const auto r = alignment_report(model, g);
  json report = r.to_json();
  report["command"] = "align-report";
  report["checkpoint"] = checkpoint.string();
  report["data"] = data.string();
  write_report(c, report);
  for (std::size_t m = 0; m < r.w1.size(); ++m) {
    out << g.modality_names()[m] << " w1 " << r.w1[m] << " residual " << r.residual[m] << "\n";
  }
  return kOk;
}

int cmd_synergy(const Common& c, std::ostream& out) {
  const auto flat = load_config(c, {"synergy.epochs", "synergy.nodes", "synergy.density"});
  auto cfg = default_synergy_config();
  cfg.train.epochs = flat.get_uint("synergy.epochs", cfg.train.epochs);
  cfg.data.num_nodes = flat.get_uint("synergy.nodes", cfg.data.num_nodes);
  cfg.data.edge_density = flat.get_double("synergy.density", cfg.data.edge_density);
  cfg.train.validate();
  const auto r = synergy_experiment(c.seed, cfg);
  json report = r.to_json();
  report["command"] = "synergy";
  report["thresholds"] = {{"max_vanilla", cfg.max_vanilla}, {"min_edg", cfg.min_edg}, {"min_gap", cfg.min_gap}};
  report["config"] = cfg.train.to_map();
  write_report(c, report);
  out << "acc_vanilla " << r.acc_vanilla << " acc_edg " << r.acc_edg << (r.pass() ? " pass" : " FAIL") << "\n";
  return kOk;
}

int cmd_gradcheck(const Common& c, std::ostream& out) {
  const auto r = model_gradcheck(c.seed);
  json report = r.to_json();
  report["command"] = "gradcheck";
  report["seed"] = c.seed;
  write_report(c, report);
  out << "checked " << r.report.checked << " entries, max rel error " << r.report.max_rel_error
      << (r.report.ok() ? " pass" : " FAIL") << "\n";
  return r.report.ok() ? kOk : kNumericalError;
}

int fail(std::ostream& err, const char* kind, const std::string& message, int code) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PLANET multimodal graph pre-training", "planet"};
  app.require_subcommand(1);
  Common c;

  std::string kind = "sbm";
  auto* synth = app.add_subcommand("synth", "Write a synthetic graph");
  add_common(synth, c);
  synth->add_option("--kind", kind, "Generator")->check(CLI::IsMember({"sbm", "synergy"}));

  std::vector<fs::path> data;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pre-training");
  add_common(pre, c);
  pre->add_option("--data", data, "Graph file, repeatable")->required();

  fs::path checkpoint, graph;
  std::size_t chunk = 0;
  auto* emb = app.add_subcommand("embed", "Write node embeddings");
  add_common(emb, c, false);
  emb->add_option("--checkpoint", checkpoint)->required();
  emb->add_option("--data", graph)->required();
  emb->add_option("--chunk", chunk, "Centers per chunk (0 = whole graph)");

  std::string task = "node";
  auto* probe = app.add_subcommand("probe", "Linear probe on frozen embeddings");
  add_common(probe, c);
  probe->add_option("--checkpoint", checkpoint)->required();
  probe->add_option("--data", graph)->required();
  probe->add_option("--task", task)->check(CLI::IsMember({"node", "link"}));

  FewShotTask fs_task;
  auto* few = app.add_subcommand("fewshot", "Prototype few-shot evaluation");
  add_common(few, c, false);
  few->add_option("--checkpoint", checkpoint)->required();
  few->add_option("--data", graph)->required();
  few->add_option("--n-way", fs_task.n_way);
  few->add_option("--k-shot", fs_task.k_shot);
  few->add_option("--n-query", fs_task.n_query);
  few->add_option("--n-task", fs_task.n_task);

  auto* align = app.add_subcommand("align-report", "W1 and quantization residuals");
  add_common(align, c, false);
  align->add_option("--checkpoint", checkpoint)->required();
  align->add_option("--data", graph)->required();

  auto* syn = app.add_subcommand("synergy", "Planted-synergy experiment");
  add_common(syn, c);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
  add_common(grad, c, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
      return kOk;
    }
    return fail(err, "config", e.what(), kConfigError);
  }

  try {
    if (synth->parsed()) return cmd_synth(c, kind, out);
    if (pre->parsed()) return cmd_pretrain(c, data, out);
    if (emb->parsed()) return cmd_embed(c, checkpoint, graph, chunk, out);
    if (probe->parsed()) return cmd_probe(c, checkpoint, graph, task, out);
    if (few->parsed()) return cmd_fewshot(c, checkpoint, graph, fs_task, out);
    if (align->parsed()) return cmd_align(c, checkpoint, graph, out);
    if (syn->parsed()) return cmd_synergy(c, out);
    if (grad->parsed()) return cmd_gradcheck(c, out);
  } catch (const ConfigError& e) {
    return fail(err, "config", e.what(), kConfigError);
  } catch (const NumericalError& e) {
    return fail(err, "numerical", e.what(), kNumericalError);
  } catch (const FormatError& e) {
    return fail(err, "data", e.what(), kDataError);
  } catch (const Error& e) {
    return fail(err, "data", e.what(), kDataError);
  } catch (const fs::filesystem_error& e) {
    return fail(err, "data", e.what(), kDataError);
  }
  return fail(err, "config", "no subcommand", kConfigError);
}

}  // namespace planet::cli
