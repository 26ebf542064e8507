// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "planet/cli/cli.hpp"
#include "planet/evallab/evallab.hpp"
#include "planet/magdata/generators.hpp"
#include "planet/magdata/io.hpp"
#include "planet/numerics/checkpoint.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/hash.hpp"
#include "planet/trainer/config.hpp"
#include "planet/trainer/trainer.hpp"

namespace py = pybind11;
using namespace planet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("split: expected train, val or test, got \"" + s + "\"");
}

TrainConfig make_config(const std::string& text, const std::vector<std::string>& overrides, std::uint64_t seed) {
  FlatConfig cfg = FlatConfig::parse(text);
  for (const auto& o : overrides) cfg.set_override(o);
  TrainConfig t = TrainConfig::from_flat(cfg);
  t.seed = seed;
  return t;
}

py::dict loss_dict(const LossBreakdown& b) {
  py::dict d;
  d["L_s"] = b.l_s;
  d["L_c"] = b.l_c;
  d["L_topo"] = b.l_topo;
  d["L_gen"] = b.l_gen;
  d["L_VQ"] = b.l_vq;
  d["L_load"] = b.l_load;
  d["total"] = b.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_planet, m) {
  m.doc() = "Multimodal graph pre-training with expert interaction and a shared codebook";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());

  py::class_<MultimodalGraph>(m, "Graph")
      .def_property_readonly("num_nodes", &MultimodalGraph::num_nodes)
      .def_property_readonly("num_edges", &MultimodalGraph::num_edges)
      .def_property_readonly("modality_names", &MultimodalGraph::modality_names)
      .def_property_readonly("anchor", &MultimodalGraph::anchor)
      .def_property_readonly("dims", &MultimodalGraph::dims)
      .def_property_readonly("labels", &MultimodalGraph::labels)
      .def_property_readonly("num_classes", &MultimodalGraph::num_classes)
      .def("features", [](const MultimodalGraph& g, std::size_t i) { return to_numpy(g.features(i)); }, py::arg("modality"))
      .def("edges",
           [](const MultimodalGraph& g) {
             py::array_t<std::uint32_t> out({g.num_edges(), std::size_t{2}});
             auto* p = out.mutable_data();
             for (const auto& e : g.edges()) {
               *p++ = e.u;
               *p++ = e.v;
             }
             return out;
           })
      .def("nodes_in", [](const MultimodalGraph& g, const std::string& s) { return g.nodes_in(parse_split(s)); },
           py::arg("split"))
      .def("save", [](const MultimodalGraph& g, const std::filesystem::path& p) { save_graph(g, p); }, py::arg("path"))
      .def_static("load", &load_graph, py::arg("path"))
      .def("__eq__", [](const MultimodalGraph& a, const MultimodalGraph& b) { return a == b; });

  m.def(
      "gen_sbm",
      [](std::uint64_t seed, std::vector<std::size_t> blocks, double p_in, double p_out, std::vector<std::size_t> dims,
         double noise, double mean_scale) {
        SbmSpec spec;
        spec.block_sizes = std::move(blocks);
        spec.p_in = p_in;
        spec.p_out = p_out;
        spec.dims = std::move(dims);
        spec.noise = noise;
        spec.mean_scale = mean_scale;
        return gen_sbm_mag(seed, spec);
      },
      py::arg("seed"), py::arg("blocks") = SbmSpec{}.block_sizes, py::arg("p_in") = SbmSpec{}.p_in,
      py::arg("p_out") = SbmSpec{}.p_out, py::arg("dims") = SbmSpec{}.dims, py::arg("noise") = SbmSpec{}.noise,
      py::arg("mean_scale") = SbmSpec{}.mean_scale);

  m.def(
      "gen_synergy",
      [](std::uint64_t seed, std::size_t nodes, double density, double noise, const std::string& mode) {
        SynergySpec spec;
        spec.num_nodes = nodes;
        spec.edge_density = density;
        spec.noise = noise;
        if (mode == "neighbor") {
          spec.mode = SynergyMode::Neighbor;
        } else if (mode != "within") {
          throw ConfigError("mode: expected within or neighbor, got \"" + mode + "\"");
        }
        return gen_synergy_mag(spec, seed).graph;
      },
      py::arg("seed"), py::arg("nodes") = SynergySpec{}.num_nodes, py::arg("density") = SynergySpec{}.edge_density,
      py::arg("noise") = SynergySpec{}.noise, py::arg("mode") = "within");

  py::class_<PlanetModel>(m, "Model")
      .def_static("load", &PlanetModel::load, py::arg("path"))
      .def("save", &PlanetModel::save, py::arg("path"))
      .def(
          "embed",
          [](PlanetModel& model, const MultimodalGraph& g, std::size_t chunk) {
            EmbedOptions o;
            o.chunk_size = chunk;
            return to_numpy(embed(model, g, o));
          },
          py::arg("graph"), py::arg("chunk_size") = 0)
      .def("checkpoint_hash", [](const PlanetModel& model) { return git_blob_hash(encode_checkpoint(model.entries())); });

  m.def(
      "pretrain",
      [](const std::vector<const MultimodalGraph*>& graphs, const std::string& config, std::vector<std::string> set,
         std::uint64_t seed, std::optional<std::filesystem::path> out_dir) {
        PretrainOptions o;
        o.config_text = config;
        if (out_dir) o.out_dir = *out_dir;
        PretrainResult r = [&] {
          py::gil_scoped_release release;
          return pretrain(graphs, make_config(config, set, seed), o);
        }();
        py::list steps;
        for (const auto& s : r.steps) {
          py::dict d = loss_dict(s.loss);
          d["step"] = s.step;
          d["epoch"] = s.epoch;
          d["perplexity"] = s.perplexity;
          steps.append(d);
        }
        return py::make_tuple(std::move(r.model), steps, r.checkpoint_hash);
      },
      py::arg("graphs"), py::arg("config") = "", py::arg("set") = std::vector<std::string>{}, py::arg("seed") = 0,
      py::arg("out_dir") = py::none(),
      "Pre-trains on the graphs; returns (model, per-step losses, checkpoint hash).");

  m.def(
      "node_probe",
      [](const Array& emb, const std::vector<std::int32_t>& labels, std::size_t num_classes,
         const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, std::uint64_t seed) {
        ProbeConfig pc;
        pc.seed = seed;
        const auto r = finetune_node_probe(from_numpy(emb), labels, num_classes, train, test, pc);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["macro_f1"] = r.macro_f1;
        d["predictions"] = r.predictions;
        return d;
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("num_classes"), py::arg("train"), py::arg("test"),
      py::arg("seed") = 0);

  m.def(
      "fewshot",
      [](const Array& emb, const std::vector<std::int32_t>& labels, std::size_t n_way, std::size_t k_shot,
         std::size_t n_query, std::size_t n_task, std::uint64_t seed) {
        FewShotTask task;
        task.n_way = n_way;
        task.k_shot = k_shot;
        task.n_query = n_query;
        task.n_task = n_task;
        task.seed = seed;
        const auto r = fewshot_eval(from_numpy(emb), labels, task);
        return py::make_tuple(r.mean, r.std, r.per_task);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("n_way") = 2, py::arg("k_shot") = 20, py::arg("n_query") = 10,
      py::arg("n_task") = 10, py::arg("seed") = 0, "Returns (mean, population std, per-task accuracies).");

  m.def(
      "solve_transport",
      [](const std::vector<double>& supply, const std::vector<double>& demand, const Array& cost) {
        const auto r = solve_transport(supply, demand, from_numpy(cost));
        return py::make_tuple(r.cost, to_numpy(r.plan));
      },
      py::arg("supply"), py::arg("demand"), py::arg("cost"), "Exact transportation simplex; returns (cost, plan).");

  m.def(
      "wasserstein1",
      [](const std::vector<std::size_t>& p_support, const std::vector<double>& p_weights,
         const std::vector<std::size_t>& q_support, const std::vector<double>& q_weights, const Array& tokens) {
        return wasserstein1({p_support, p_weights}, {q_support, q_weights}, from_numpy(tokens));
      },
      py::arg("p_support"), py::arg("p_weights"), py::arg("q_support"), py::arg("q_weights"), py::arg("tokens"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        const auto r = [&] {
          py::gil_scoped_release release;
          return model_gradcheck(seed);
        }();
        return r.to_json().dump();
      },
      py::arg("seed") = 1, "Full-model finite-difference check; returns the JSON report as a string.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a planet subcommand in-process; returns (exit code, stdout, stderr).");
}
