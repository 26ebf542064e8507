// SPDX-License-Identifier: Apache-2.0
#include "planet/evallab/evallab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>

#include "planet/numerics/errors.hpp"

namespace planet {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double den = norm(a) * norm(b);
  return den > 0.0 ? dot / den : 0.0;
}

// First `k` entries of `items` become a uniform sample without replacement.
template <class T>
void partial_shuffle(std::vector<T>& items, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(items[i], items[i + rng.index(items.size() - i)]);
}

}  // namespace

FewShotResult fewshot_eval(const Tensor& embeddings, const std::vector<std::int32_t>& labels,
                           const FewShotTask& task) {
  if (task.n_way == 0 || task.k_shot == 0 || task.n_query == 0 || task.n_task == 0) {
    throw ConfigError("fewshot: n_way, k_shot, n_query and n_task must be positive");
  }
  if (labels.size() != embeddings.rows()) throw FormatError("fewshot: one label per embedding row required");

  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::vector<std::size_t> pool = task.class_pool;
  if (pool.empty()) {
    for (const auto& [c, nodes] : members) pool.push_back(c);
  }
  std::vector<std::size_t> eligible;
  const std::size_t need = task.k_shot + task.n_query;
  for (auto c : pool) {
    auto it = members.find(c);
    if (it != members.end() && it->second.size() >= need) eligible.push_back(c);
  }
  std::sort(eligible.begin(), eligible.end());
  eligible.erase(std::unique(eligible.begin(), eligible.end()), eligible.end());
  if (eligible.size() < task.n_way) {
    throw FormatError("fewshot: " + std::to_string(eligible.size()) + " classes have " + std::to_string(need) +
                      " labelled nodes, " + std::to_string(task.n_way) + " required");
  }

  const Rng root(task.seed);
  const std::size_t d = embeddings.cols();
  FewShotResult out;
  for (std::size_t t = 0; t < task.n_task; ++t) {
    Rng rng = root.stream("task", t);
    std::vector<std::size_t> classes = eligible;
    partial_shuffle(classes, task.n_way, rng);
    classes.resize(task.n_way);
    std::sort(classes.begin(), classes.end());

    Tensor protos({task.n_way, d});
    std::vector<std::vector<std::size_t>> queries(task.n_way);
    for (std::size_t c = 0; c < task.n_way; ++c) {
      std::vector<std::size_t> nodes = members.at(classes[c]);
      partial_shuffle(nodes, need, rng);
      for (std::size_t s = 0; s < task.k_shot; ++s) {
        const auto row = embeddings.row(nodes[s]);
        for (std::size_t j = 0; j < d; ++j) protos(c, j) += row[j] / static_cast<double>(task.k_shot);
      }
      queries[c].assign(nodes.begin() + static_cast<std::ptrdiff_t>(task.k_shot),
                        nodes.begin() + static_cast<std::ptrdiff_t>(need));
    }

    std::size_t correct = 0;
    for (std::size_t c = 0; c < task.n_way; ++c) {
      for (auto q : queries[c]) {
        std::size_t best = 0;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < task.n_way; ++k) {
          const double sim = cosine(embeddings.row(q), protos.row(k));
          if (sim > best_sim) {
            best_sim = sim;
            best = k;
          }
        }
        correct += best == c ? 1 : 0;
      }
    }
    out.per_task.push_back(static_cast<double>(correct) / static_cast<double>(task.n_way * task.n_query));
  }
  const double n = static_cast<double>(out.per_task.size());
  out.mean = std::accumulate(out.per_task.begin(), out.per_task.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out.per_task) var += (a - out.mean) * (a - out.mean);
  out.std = std::sqrt(var / n);
  return out;
}

double DiscreteDistribution::total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

DiscreteDistribution pushforward(const std::vector<std::size_t>& token_index) {
  DiscreteDistribution p;
  if (token_index.empty()) return p;
  std::map<std::size_t, std::size_t> counts;
  for (auto c : token_index) ++counts[c];
  const double n = static_cast<double>(token_index.size());
  for (const auto& [c, k] : counts) {
    p.support.push_back(c);
    p.weights.push_back(static_cast<double>(k) / n);
  }
  return p;
}

TransportSolution solve_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                  const Tensor& cost) {
  if (cost.rows() != supply.size() || cost.cols() != demand.size()) {
    throw DimensionError("transport: cost must be supply × demand");
  }
  for (double w : supply) {
    if (!(w >= 0.0)) throw ContractError("transport: negative or non-finite supply");
  }
  for (double w : demand) {
    if (!(w >= 0.0)) throw ContractError("transport: negative or non-finite demand");
  }
  const double total_a = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double total_b = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(total_a - total_b) > 1e-9) {
    throw ContractError("transport: masses differ (" + std::to_string(total_a) + " vs " + std::to_string(total_b) +
                        ")");
  }

  TransportSolution sol;
  sol.plan = Tensor({supply.size(), demand.size()});
  // Rows and columns without mass carry no flow; solve on the rest.
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < supply.size(); ++i) {
    if (supply[i] > 0.0) rows.push_back(i);
  }
  for (std::size_t j = 0; j < demand.size(); ++j) {
    if (demand[j] > 0.0) cols.push_back(j);
  }
  if (rows.empty() || cols.empty()) return sol;
  const std::size_t m = rows.size(), n = cols.size();
  std::vector<double> a(m), b(n);
  for (std::size_t i = 0; i < m; ++i) a[i] = supply[rows[i]];
  for (std::size_t j = 0; j < n; ++j) b[j] = demand[cols[j]] * (total_a / total_b);
  auto c = [&](std::size_t i, std::size_t j) { return cost(rows[i], cols[j]); };

  std::vector<double> x(m * n, 0.0);
  std::vector<char> basic(m * n, 0);
  {
    std::vector<double> ra = a, rb = b;
    std::size_t i = 0, j = 0;
    while (true) {
      const double f = std::min(ra[i], rb[j]);
      x[i * n + j] = f;
      basic[i * n + j] = 1;
      ra[i] -= f;
      rb[j] -= f;
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1) {
        ++j;
      } else if (j == n - 1 || ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  double max_cost = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) max_cost = std::max(max_cost, std::abs(c(i, j)));
  }
  const double eps = 1e-12 * (1.0 + max_cost);
  const std::size_t max_pivots = 50 * (m + n) * (m + n) + 1000;

  // Tree nodes: rows 0..m-1, columns m..m+n-1; basic cells are the edges.
  std::vector<double> u(m), v(n);
  std::vector<std::vector<std::size_t>> tree(m + n);
  auto rebuild_tree = [&] {
    for (auto& t : tree) t.clear();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (basic[i * n + j]) {
          tree[i].push_back(m + j);
          tree[m + j].push_back(i);
        }
      }
    }
  };

  while (true) {
    rebuild_tree();
    std::vector<char> seen(m + n, 0);
    std::deque<std::size_t> frontier{0};
    seen[0] = 1;
    u[0] = 0.0;
    while (!frontier.empty()) {
      const std::size_t node = frontier.front();
      frontier.pop_front();
      for (auto next : tree[node]) {
        if (seen[next]) continue;
        seen[next] = 1;
        if (node < m) {
          v[next - m] = c(node, next - m) - u[node];
        } else {
          u[next] = c(next, node - m) - v[node - m];
        }
        frontier.push_back(next);
      }
    }

    std::size_t enter = m * n;
    for (std::size_t k = 0; k < m * n && enter == m * n; ++k) {
      if (!basic[k] && c(k / n, k % n) - u[k / n] - v[k % n] < -eps) enter = k;
    }
    if (enter == m * n) break;
    if (++sol.pivots > max_pivots) throw NumericalError("transport: pivot limit exceeded");

    // Path in the basis tree from the entering row to the entering column.
    const std::size_t ei = enter / n, ej = enter % n;
    std::vector<std::size_t> parent(m + n, m + n);
    std::deque<std::size_t> q{ei};
    parent[ei] = ei;
    while (!q.empty() && parent[m + ej] == m + n) {
      const std::size_t node = q.front();
      q.pop_front();
      for (auto next : tree[node]) {
        if (parent[next] == m + n) {
          parent[next] = node;
          q.push_back(next);
        }
      }
    }
    std::vector<std::size_t> path;  // cells from column ej back to row ei
    for (std::size_t node = m + ej; node != ei; node = parent[node]) {
      const std::size_t prev = parent[node];
      path.push_back(node < m ? node * n + (prev - m) : prev * n + (node - m));
    }
    // The cycle alternates from the entering cell; the cell touching column
    // ej loses flow, the next gains, and so on.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = m * n;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const std::size_t cell = path[k];
      if (x[cell] < theta || (x[cell] == theta && cell < leave)) {
        theta = x[cell];
        leave = cell;
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) x[path[k]] += (k % 2 == 0 ? -theta : theta);
    x[enter] = theta;
    basic[enter] = 1;
    basic[leave] = 0;
    x[leave] = 0.0;
  }

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double f = std::max(0.0, x[i * n + j]);
      sol.plan(rows[i], cols[j]) = f;
      sol.cost += f * c(i, j);
    }
  }
  return sol;
}

double wasserstein1(const DiscreteDistribution& p, const DiscreteDistribution& q, const Tensor& tokens) {
  if (p.support.size() != p.weights.size() || q.support.size() != q.weights.size()) {
    throw ContractError("wasserstein1: support and weights differ in length");
  }
  if (std::abs(p.total() - q.total()) > 1e-9) throw ContractError("wasserstein1: weight sums differ");
  for (auto s : p.support) {
    if (s >= tokens.rows()) throw ContractError("wasserstein1: support outside the codebook");
  }
  for (auto s : q.support) {
    if (s >= tokens.rows()) throw ContractError("wasserstein1: support outside the codebook");
  }
  Tensor cost({p.support.size(), q.support.size()});
  for (std::size_t i = 0; i < p.support.size(); ++i) {
    for (std::size_t j = 0; j < q.support.size(); ++j) {
      const auto a = tokens.row(p.support[i]);
      const auto b = tokens.row(q.support[j]);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      cost(i, j) = std::sqrt(s);
    }
  }
  return solve_transport(p.weights, q.weights, cost).cost;
}

nlohmann::json AlignmentReport::to_json() const {
  nlohmann::json j;
  j["anchor"] = anchor;
  j["w1"] = w1;
  j["residual"] = residual;
  auto& pf = j["pushforward"] = nlohmann::json::array();
  for (const auto& p : pushforward) pf.push_back({{"support", p.support}, {"weights", p.weights}});
  return j;
}

AlignmentReport alignment_report(PlanetModel& model, const MultimodalGraph& g) {
  if (!model.config().interaction) throw ContractError("alignment report: the vanilla ablation has no codebook");
  model.check_schema(g);
  const auto saved_usage = model.codebook().usage;
  Tape tape;
  const ForwardResult f = model.forward(tape, g.features(), g.adjacency());
  model.codebook().usage = saved_usage;

  AlignmentReport r;
  r.anchor = model.config().anchor;
  const std::size_t M = model.config().num_modalities();
  for (std::size_t m = 0; m < M; ++m) {
    r.pushforward.push_back(pushforward(f.quantized[m].index));
    const Tensor& h = f.interacted[m].value();
    const Tensor& s = f.quantized[m].quantized.value();
    double total = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < h.cols(); ++k) d2 += (h(i, k) - s(i, k)) * (h(i, k) - s(i, k));
      total += std::sqrt(d2);
    }
    r.residual.push_back(h.rows() == 0 ? 0.0 : total / static_cast<double>(h.rows()));
  }
  const Tensor& tokens = model.codebook().tokens->value;
  for (std::size_t m = 0; m < M; ++m) {
    r.w1.push_back(m == r.anchor ? 0.0 : wasserstein1(r.pushforward[m], r.pushforward[r.anchor], tokens));
  }
  return r;
}

SynergyExperimentConfig default_synergy_config() {
  SynergyExperimentConfig c;
  c.data.num_nodes = 1000;
  c.data.noise = 0.1;
  c.data.edge_density = 0.0005;
  c.train = desk_profile();
  c.train.epochs = 100;
  c.train.dropout = 0.0;
  c.train.mask.node_p = 0.0;
  return c;
}

nlohmann::json SynergyResult::to_json() const {
  return {{"seed", seed},
          {"acc_vanilla", acc_vanilla},
          {"acc_edg", acc_edg},
          {"gap", acc_edg - acc_vanilla},
          {"pass_vanilla", pass_vanilla},
          {"pass_edg", pass_edg},
          {"pass_gap", pass_gap},
          {"pass", pass()},
          {"seconds", seconds}};
}

SynergyResult synergy_experiment(std::uint64_t seed, const SynergyExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const SynergyGraph data = gen_synergy_mag(config.data, seed);
  const MultimodalGraph& g = data.graph;
  const auto train = g.nodes_in(Split::Train);
  const auto test = g.nodes_in(Split::Test);

  auto run = [&](bool interaction) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    tc.model.interaction = interaction;
    PretrainResult r = pretrain({&g}, tc);
    const Tensor emb = embed(r.model, g);
    return finetune_node_probe(emb, g.labels(), g.num_classes(), train, test, config.probe).accuracy;
  };

  SynergyResult out;
  out.seed = seed;
  out.acc_vanilla = run(false);
  out.acc_edg = run(true);
  out.pass_vanilla = out.acc_vanilla <= config.max_vanilla;
  out.pass_edg = out.acc_edg >= config.min_edg;
  out.pass_gap = out.acc_edg - out.acc_vanilla >= config.min_gap;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

AlignmentExperimentConfig default_alignment_config() {
  AlignmentExperimentConfig c;
  c.train = desk_profile();
  return c;
}

nlohmann::json AlignmentExperimentResult::to_json() const {
  return {{"seed", seed},
          {"aligned", aligned.to_json()},
          {"ablated", ablated.to_json()},
          {"mean_residual_aligned", mean_residual_aligned},
          {"mean_residual_ablated", mean_residual_ablated},
          {"pass_w1", pass_w1},
          {"pass_residual", pass_residual},
          {"pass", pass()}};
}

AlignmentExperimentResult alignment_experiment(std::uint64_t seed, const AlignmentExperimentConfig& config) {
  const MultimodalGraph g = gen_sbm_mag(seed, config.data);
  auto run = [&](bool align) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    if (!align) {
      tc.weights.gen = 0.0;
      tc.weights.vq = 0.0;
    }
    PretrainResult r = pretrain({&g}, tc);
    return alignment_report(r.model, g);
  };
  AlignmentExperimentResult out;
  out.seed = seed;
  out.aligned = run(true);
  out.ablated = run(false);
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  out.mean_residual_aligned = mean(out.aligned.residual);
  out.mean_residual_ablated = mean(out.ablated.residual);
  out.pass_w1 = true;
  for (std::size_t m = 0; m < out.aligned.w1.size(); ++m) {
    if (m == out.aligned.anchor) continue;
    out.pass_w1 = out.pass_w1 && out.aligned.w1[m] < out.ablated.w1[m];
  }
  out.pass_residual = out.mean_residual_aligned < out.mean_residual_ablated;
  return out;
}

nlohmann::json ModelGradCheck::to_json() const {
  nlohmann::json worst = nlohmann::json::array();
  for (const auto& m : report.mismatches) {
    worst.push_back({{"param", m.param}, {"index", m.index}, {"autodiff", m.autodiff}, {"numeric", m.numeric}});
  }
  return {{"nodes", num_nodes},
          {"params", num_params},
          {"checked", report.checked},
          {"max_rel_error", report.max_rel_error},
          {"mismatches", worst},
          {"pass", report.ok()},
          {"seconds", seconds}};
}

ModelGradCheck model_gradcheck(std::uint64_t seed, const GradCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Rng root(seed);
  SbmSpec spec;
  spec.block_sizes = {6, 6};
  spec.p_in = 0.6;
  spec.p_out = 0.1;
  spec.dims = {3, 4};
  const MultimodalGraph g = gen_sbm_mag(root.stream("graph").next_u64(), spec);

  ModelConfig cfg;
  cfg.adopt_schema(g);
  cfg.dim = 4;
  cfg.num_layers = 1;
  cfg.heads = 2;
  cfg.num_experts = 2;
  cfg.top_k = 2;
  cfg.codebook_size = 6;
  PlanetModel model(cfg, root.stream("model").next_u64());
  Rng values = root.stream("values");
  for (auto& p : model.params()) {
    for (auto& v : p->value.data()) v = 0.5 * values.uniform(-1.0, 1.0);
  }

  EgoBatchOptions batch_opts;
  batch_opts.edge_holdout_p = 0.2;
  batch_opts.mask = MaskConfig{0.5, 0.5, 1.0};
  std::vector<std::size_t> centers(g.num_nodes());
  std::iota(centers.begin(), centers.end(), 0);
  const EgoBatch batch = sample_ego_batch(g, centers, batch_opts, root.stream("batch").next_u64());
  {
    Tape warm;
    model.forward(warm, batch.features, batch.adjacency);
  }
  const LossWeights weights;
  ModelGradCheck out;
  out.num_nodes = g.num_nodes();
  out.num_params = model.params().num_values();
  out.report = check_gradients(
      model.params(), [&](Tape& tape) { return batch_loss(tape, model, batch, weights).loss.total; }, options);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace planet
