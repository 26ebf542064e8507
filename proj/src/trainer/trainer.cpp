// SPDX-License-Identifier: Apache-2.0
#include "planet/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "planet/magdata/io.hpp"
#include "planet/numerics/errors.hpp"
#include "planet/numerics/hash.hpp"
#include "planet/numerics/ops.hpp"
#include "planet/numerics/optimizer.hpp"

namespace planet {

namespace {

using nlohmann::json;

// First `k` entries of a seeded shuffle of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::size_t pick_dataset(const std::vector<double>& weights, std::size_t count, Rng rng) {
  if (count == 1) return 0;
  std::vector<double> w = weights.empty() ? std::vector<double>(count, 1.0) : weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < count; ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  // Rounding can leave u a hair above the last bucket.
  for (std::size_t i = count; i-- > 0;) {
    if (w[i] > 0.0) return i;
  }
  return 0;
}

json breakdown_json(const LossBreakdown& b) {
  return {{"L_s", b.l_s},       {"L_c", b.l_c},   {"L_feat", b.l_feat}, {"L_topo", b.l_topo},
          {"L_gen", b.l_gen},   {"L_VQ", b.l_vq}, {"L_load", b.l_load}, {"total", b.total}};
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w) {
  acc.l_s += w * b.l_s;
  acc.l_c += w * b.l_c;
  acc.l_feat += w * b.l_feat;
  acc.l_topo += w * b.l_topo;
  acc.l_gen += w * b.l_gen;
  acc.l_vq += w * b.l_vq;
  acc.l_load += w * b.l_load;
  acc.total += w * b.total;
}

double step_perplexity(const ForwardResult& f, std::size_t codebook_size) {
  if (f.quantized.empty()) return 0.0;
  std::vector<std::size_t> counts(codebook_size, 0);
  for (const auto& q : f.quantized) {
    for (auto j : q.index) ++counts[j];
  }
  return codebook_report(counts).perplexity;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

Tensor rows_of(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

// Column standardization with statistics from `fit_rows`.
Tensor standardize(const Tensor& x, const std::vector<std::size_t>& fit_rows) {
  const std::size_t d = x.cols();
  std::vector<double> mu(d, 0.0);
  std::vector<double> sd(d, 0.0);
  for (auto r : fit_rows) {
    for (std::size_t c = 0; c < d; ++c) mu[c] += x(r, c);
  }
  for (auto& v : mu) v /= static_cast<double>(fit_rows.size());
  for (auto r : fit_rows) {
    for (std::size_t c = 0; c < d; ++c) sd[c] += (x(r, c) - mu[c]) * (x(r, c) - mu[c]);
  }
  for (auto& v : sd) {
    v = std::sqrt(v / static_cast<double>(fit_rows.size()));
    if (v < 1e-12) v = 1.0;
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out(r, c) = (x(r, c) - mu[c]) / sd[c];
  }
  return out;
}

struct Head {
  ParameterStore store;
  Mlp2 mlp;
  Linear linear;
  bool deep = false;

  Head(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) : deep(hidden > 0) {
    Rng rng(seed);
    if (deep) {
      mlp = Mlp2::create(store, "head", in, hidden, out, rng);
    } else {
      linear = Linear::create(store, "head", in, out, rng);
    }
  }
  Var operator()(Tape& tape, const Var& x) const { return deep ? mlp(tape, x) : linear(tape, x); }
  Tensor eval(const Tensor& x) const {
    Tape tape;
    return (*this)(tape, tape.constant(x)).value();
  }
};

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::string metrics_csv_header() { return "step,epoch,L_s,L_c,L_topo,L_gen,L_VQ,L_load,total,perplexity"; }

std::string metrics_csv_row(const StepRecord& r) {
  std::ostringstream os;
  os.precision(17);
  const auto& b = r.loss;
  os << r.step << ',' << r.epoch << ',' << b.l_s << ',' << b.l_c << ',' << b.l_topo << ',' << b.l_gen << ','
     << b.l_vq << ',' << b.l_load << ',' << b.total << ',' << r.perplexity;
  return os.str();
}

PretrainResult pretrain(const std::vector<const MultimodalGraph*>& graphs, const TrainConfig& config,
                        const PretrainOptions& options) {
  config.validate();
  if (graphs.empty()) throw ContractError("pretrain: no graphs");
  for (const auto* g : graphs) {
    if (!g->same_schema(*graphs.front())) throw FormatError("pretrain: graphs do not share a modality schema");
  }
  if (!config.dataset_weights.empty() && config.dataset_weights.size() != graphs.size()) {
    throw ConfigError("train.dataset_weights has " + std::to_string(config.dataset_weights.size()) +
                      " entries for " + std::to_string(graphs.size()) + " graphs");
  }

  ModelConfig mcfg = config.model;
  mcfg.adopt_schema(*graphs.front());
  const Rng root(config.seed);
  PretrainResult result{PlanetModel(mcfg, root.stream("model").next_u64()), {}, {}, {}, {}};
  PlanetModel& model = result.model;
  AdamW opt(model.params(), AdamWConfig{config.lr, config.weight_decay});

  EgoBatchOptions batch_opts;
  batch_opts.hops = config.hops;
  batch_opts.edge_holdout_p = config.edge_holdout_p;
  batch_opts.mask = config.mask;

  const std::size_t total_steps = config.epochs * config.steps_per_epoch;
  const std::size_t num_banks = mcfg.interaction ? mcfg.num_layers * mcfg.num_modalities() : 0;
  EpochSummary current;
  auto start_epoch = [&](std::size_t e) {
    current = EpochSummary{};
    current.epoch = e;
    current.routing.assign(num_banks, RoutingStats{std::vector<double>(mcfg.num_experts, 0.0),
                                                   std::vector<double>(mcfg.num_experts, 0.0)});
    if (mcfg.interaction) model.codebook().reset_usage();
  };
  start_epoch(0);

  for (std::size_t step = 0; step < total_steps; ++step) {
    const std::size_t epoch = step / config.steps_per_epoch;
    if (epoch != current.epoch) {
      result.epochs.push_back(current);
      start_epoch(epoch);
    }
    const Rng srng = root.stream("step", step);
    const std::size_t which = pick_dataset(config.dataset_weights, graphs.size(), srng.stream("dataset"));
    const MultimodalGraph& g = *graphs[which];
    const auto centers = sample_without_replacement(g.num_nodes(), config.batch_size, srng.stream("centers"));
    const EgoBatch batch = sample_ego_batch(g, centers, batch_opts, srng.stream("batch").next_u64());

    StepRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    try {
      Rng dropout_rng = srng.stream("dropout");
      Tape tape;
      tape.training = true;
      tape.dropout = config.dropout;
      tape.dropout_rng = &dropout_rng;
      model.params().zero_grad();
      const BatchLoss out = batch_loss(tape, model, batch, config.weights);
      rec.loss = out.loss.breakdown;
      if (!std::isfinite(rec.loss.total)) throw NumericalError("non-finite total loss");
      rec.perplexity = step_perplexity(out.forward, mcfg.codebook_size);
      tape.backward(out.loss.total);
      opt.step();
      for (std::size_t b = 0; b < out.routing.size() && b < num_banks; ++b) {
        for (std::size_t k = 0; k < mcfg.num_experts; ++k) {
          current.routing[b].fraction[k] += out.routing[b].fraction[k] / static_cast<double>(config.steps_per_epoch);
          current.routing[b].mean_prob[k] += out.routing[b].mean_prob[k] / static_cast<double>(config.steps_per_epoch);
        }
      }
    } catch (const NumericalError& e) {
      if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        json dump = {{"step", step},           {"epoch", epoch},         {"dataset", which},
                     {"centers", centers},     {"error", e.what()},      {"last_losses", breakdown_json(rec.loss)}};
        write_text(options.out_dir / "nan_dump.json", dump.dump(2));
      }
      throw NumericalError("pretrain: step " + std::to_string(step) + ": " + e.what());
    }
    accumulate(current.mean, rec.loss, 1.0 / static_cast<double>(config.steps_per_epoch));
    result.steps.push_back(rec);
    if (options.on_step) options.on_step(rec, model);
  }
  if (mcfg.interaction) current.codebook = codebook_report(model.codebook());
  result.epochs.push_back(current);

  const std::string checkpoint_bytes = encode_checkpoint(model.entries());
  result.checkpoint_hash = git_blob_hash(checkpoint_bytes);

  json data = json::array();
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    data.push_back({{"name", i < options.data_names.size() ? options.data_names[i] : "graph" + std::to_string(i)},
                    {"hash", git_blob_hash(encode_graph(*graphs[i]))},
                    {"nodes", graphs[i]->num_nodes()},
                    {"edges", graphs[i]->num_edges()}});
  }
  json epochs = json::array();
  for (const auto& e : result.epochs) {
    json routing = json::array();
    for (const auto& r : e.routing) routing.push_back({{"f", r.fraction}, {"P", r.mean_prob}});
    epochs.push_back({{"epoch", e.epoch},
                      {"mean", breakdown_json(e.mean)},
                      {"codebook", {{"usage", e.codebook.usage}, {"dead", e.codebook.dead},
                                    {"perplexity", e.codebook.perplexity}}},
                      {"routing", routing}});
  }
  result.manifest = {{"config_text", options.config_text},
                     {"config", config.to_map()},
                     {"seed", config.seed},
                     {"data", data},
                     {"epochs", epochs},
                     {"final_checkpoint_hash", result.checkpoint_hash}};

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    std::string csv = metrics_csv_header() + "\n";
    for (const auto& r : result.steps) csv += metrics_csv_row(r) + "\n";
    write_text(options.out_dir / "metrics.csv", csv);
    write_text(options.out_dir / "model.plnt", checkpoint_bytes);
    write_text(options.out_dir / "manifest.json", result.manifest.dump(2) + "\n");
  }
  return result;
}

Tensor embed(PlanetModel& model, const MultimodalGraph& g, const EmbedOptions& options) {
  model.check_schema(g);
  const auto saved_usage = model.codebook().usage;
  if (model.config().interaction && !model.codebook().initialized) {
    // An untrained codebook is seeded from the whole graph so chunking cannot change the result.
    Tape tape;
    model.forward(tape, g.features(), g.adjacency());
  }
  Tensor out;
  if (options.chunk_size == 0) {
    Tape tape;
    out = model.forward(tape, g.features(), g.adjacency()).embedding.value();
  } else {
    const std::size_t hops = options.hops == 0 ? model.config().num_layers : options.hops;
    out = Tensor({g.num_nodes(), model.config().embedding_dim()});
    for (std::size_t begin = 0; begin < g.num_nodes(); begin += options.chunk_size) {
      std::vector<std::size_t> centers;
      for (std::size_t i = begin; i < std::min(g.num_nodes(), begin + options.chunk_size); ++i) centers.push_back(i);
      const auto nodes = khop_nodes(g, centers, hops);
      std::vector<std::size_t> local(g.num_nodes(), nodes.size());
      for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = i;
      std::vector<Edge> edges;
      for (const auto& e : g.edges()) {
        if (local[e.u] < nodes.size() && local[e.v] < nodes.size()) {
          edges.push_back(Edge{static_cast<std::uint32_t>(local[e.u]), static_cast<std::uint32_t>(local[e.v])});
        }
      }
      std::vector<Tensor> feats;
      for (std::size_t m = 0; m < g.num_modalities(); ++m) feats.push_back(rows_of(g.features(m), nodes));
      Tape tape;
      const Tensor e = model.forward(tape, feats, Adjacency::from_edges(nodes.size(), edges)).embedding.value();
      for (auto c : centers) std::copy(e.row(local[c]).begin(), e.row(local[c]).end(), out.row(c).begin());
    }
  }
  model.codebook().usage = saved_usage;
  return out;
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ContractError("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                std::size_t num_classes) {
  if (predicted.size() != truth.size() || num_classes == 0) throw ContractError("macro_f1: bad input");
  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) {
      tp[truth[i]] += 1;
    } else {
      fp[predicted[i]] += 1;
      fn[truth[i]] += 1;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    sum += denom > 0 ? 2 * tp[c] / denom : 0.0;
  }
  return sum / static_cast<double>(num_classes);
}

double mean_reciprocal_rank(const std::vector<double>& positive, const std::vector<std::vector<double>>& negatives) {
  if (positive.size() != negatives.size() || positive.empty()) throw ContractError("mrr: size mismatch or empty");
  double total = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    std::size_t rank = 1;
    for (double s : negatives[i]) rank += s >= positive[i] ? 1 : 0;
    total += 1.0 / static_cast<double>(rank);
  }
  return total / static_cast<double>(positive.size());
}

NodeProbeResult finetune_node_probe(const Tensor& embeddings, const std::vector<std::int32_t>& labels,
                                    std::size_t num_classes, const std::vector<std::size_t>& train,
                                    const std::vector<std::size_t>& test, const ProbeConfig& config) {
  if (labels.size() != embeddings.rows() || num_classes == 0) throw FormatError("probe: graph has no labels");
  if (train.empty() || test.empty()) throw FormatError("probe: train or test split is empty");
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw FormatError("probe: label out of range");
  }
  const Tensor x = config.standardize ? standardize(embeddings, train) : embeddings;
  const Tensor xtr = rows_of(x, train);
  std::vector<std::size_t> ytr;
  for (auto i : train) ytr.push_back(static_cast<std::size_t>(labels[i]));

  Head head(x.cols(), config.hidden, num_classes, Rng(config.seed).stream("probe").next_u64());
  AdamW opt(head.store, AdamWConfig{config.lr, config.weight_decay});
  for (std::size_t e = 0; e < config.epochs; ++e) {
    Tape tape;
    head.store.zero_grad();
    const Var logp = log_softmax_rows(head(tape, tape.constant(xtr)));
    tape.backward(scale(mean(pick(logp, ytr)), -1.0));
    opt.step();
  }

  NodeProbeResult r;
  const Tensor logits = head.eval(rows_of(x, test));
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < test.size(); ++i) {
    r.predictions.push_back(argmax_row(logits.row(i)));
    truth.push_back(static_cast<std::size_t>(labels[test[i]]));
  }
  r.accuracy = accuracy(r.predictions, truth);
  r.macro_f1 = macro_f1(r.predictions, truth, num_classes);
  return r;
}

LinkProbeResult finetune_link_probe(const Tensor& embeddings, const MultimodalGraph& g, const ProbeConfig& config,
                                    const LinkProbeOptions& options) {
  if (embeddings.rows() != g.num_nodes()) throw DimensionError("link probe: one embedding row per node required");
  if (g.num_edges() < 2) throw FormatError("link probe: graph needs at least two edges");
  const Rng root(config.seed);
  std::vector<Edge> edges = g.edges();
  {
    Rng shuffle = root.stream("split");
    for (std::size_t i = edges.size(); i > 1; --i) std::swap(edges[i - 1], edges[shuffle.index(i)]);
  }
  const std::size_t n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(options.test_fraction * static_cast<double>(edges.size()))), 1,
      edges.size() - 1);
  const std::vector<Edge> test(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<Edge> train(edges.begin() + static_cast<std::ptrdiff_t>(n_test), edges.end());

  std::vector<std::size_t> all(g.num_nodes());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor x = config.standardize ? standardize(embeddings, all) : embeddings;
  const std::size_t n = g.num_nodes();
  auto pair_rows = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    Tensor out({pairs.size(), 2 * x.cols()});
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      auto row = out.row(i);
      std::copy(x.row(pairs[i].first).begin(), x.row(pairs[i].first).end(), row.begin());
      std::copy(x.row(pairs[i].second).begin(), x.row(pairs[i].second).end(), row.begin() + static_cast<std::ptrdiff_t>(x.cols()));
    }
    return out;
  };

  std::vector<std::pair<std::size_t, std::size_t>> pos;
  for (const auto& e : train) pos.emplace_back(e.u, e.v);
  std::vector<std::pair<std::size_t, std::size_t>> neg;
  {
    Rng r = root.stream("train_negatives");
    const std::size_t max_tries = 100 * pos.size() + 1000;
    for (std::size_t t = 0; t < max_tries && neg.size() < pos.size(); ++t) {
      const std::size_t a = r.index(n);
      const std::size_t b = r.index(n);
      if (a != b && !g.has_edge(a, b)) neg.emplace_back(a, b);
    }
  }
  if (neg.empty()) throw FormatError("link probe: graph has no non-edges to sample");

  Head head(2 * x.cols(), config.hidden, 1, root.stream("head").next_u64());
  AdamW opt(head.store, AdamWConfig{config.lr, config.weight_decay});
  const Tensor xp = pair_rows(pos);
  const Tensor xn = pair_rows(neg);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    Tape tape;
    head.store.zero_grad();
    const Var lp = mean(log_sigmoid(head(tape, tape.constant(xp)), 30.0));
    const Var ln = mean(log_sigmoid(scale(head(tape, tape.constant(xn)), -1.0), 30.0));
    tape.backward(scale(lp + ln, -1.0));
    opt.step();
  }

  std::vector<double> pos_scores;
  std::vector<std::vector<double>> neg_scores;
  for (std::size_t t = 0; t < test.size(); ++t) {
    const std::size_t u = test[t].u;
    std::vector<std::size_t> candidates;
    for (std::size_t w = 0; w < n; ++w) {
      if (w != u && !g.has_edge(u, w)) candidates.push_back(w);
    }
    Rng r = root.stream("test_negatives", t);
    const std::size_t k = std::min(options.negatives_per_positive, candidates.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(candidates[i], candidates[i + r.index(candidates.size() - i)]);
    std::vector<std::pair<std::size_t, std::size_t>> pairs{{u, test[t].v}};
    for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(u, candidates[i]);
    const Tensor s = head.eval(pair_rows(pairs));
    pos_scores.push_back(s(0, 0));
    neg_scores.emplace_back();
    for (std::size_t i = 1; i < pairs.size(); ++i) neg_scores.back().push_back(s(i, 0));
  }
  return LinkProbeResult{mean_reciprocal_rank(pos_scores, neg_scores), test.size()};
}

}  // namespace planet
