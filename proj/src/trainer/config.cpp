// SPDX-License-Identifier: Apache-2.0
#include "planet/trainer/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "planet/numerics/errors.hpp"

namespace planet {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool valid_key(const std::string& k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

// Splits the inside of "[a, b, c]"; strings are not allowed inside arrays.
bool split_array(const std::string& v, std::vector<std::string>& items) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') return false;
  items.clear();
  const std::string inner = trim(std::string_view(v).substr(1, v.size() - 2));
  if (inner.empty()) return true;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return true;
}

bool valid_scalar(const std::string& v) {
  double d = 0;
  if (v == "true" || v == "false" || parse_number(v, d)) return true;
  return v.size() >= 2 && v.front() == '"' && v.back() == '"' && v.find('"', 1) == v.size() - 1;
}

bool valid_value(const std::string& v) {
  std::vector<std::string> items;
  if (split_array(v, items)) {
    return std::all_of(items.begin(), items.end(), [](const std::string& s) {
      double d = 0;
      return parse_number(s, d);
    });
  }
  return valid_scalar(v);
}

// Removes a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
  std::string key = trim(std::string_view(text).substr(0, eq));
  std::string value = trim(std::string_view(text).substr(eq + 1));
  if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
  if (!valid_value(value)) throw ConfigError(where + ": invalid value for " + key + ": '" + value + "'");
  return {std::move(key), std::move(value)};
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "profile",
      "train.epochs", "train.steps_per_epoch", "train.batch_size", "train.lr", "train.weight_decay",
      "train.dropout", "train.hops", "train.edge_holdout_p", "train.dataset_weights", "train.seed",
      "mask.node_p", "mask.modality_p", "mask.dim_p",
      "loss.beta_feat", "loss.beta_topo", "loss.beta_gen", "loss.beta_vq", "loss.beta_load", "loss.beta_inter",
      "loss.masked_only",
      "model.dim", "model.num_layers", "model.heads", "model.num_experts", "model.top_k", "model.codebook_size",
      "model.tau", "model.gamma", "model.interaction",
  };
  return keys;
}

}  // namespace

FlatConfig FlatConfig::parse(const std::string& text) {
  FlatConfig cfg;
  cfg.source_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(number);
    auto [key, value] = split_assignment(body, where);
    if (cfg.values_.count(key)) throw ConfigError(where + ": duplicate key " + key);
    cfg.values_[key] = value;
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void FlatConfig::set_override(const std::string& assignment) {
  auto [key, value] = split_assignment(assignment, "override '" + assignment + "'");
  values_[key] = value;
}

void FlatConfig::set(const std::string& key, const std::string& raw_value) {
  if (!valid_key(key) || !valid_value(raw_value)) throw ConfigError("invalid setting " + key + " = " + raw_value);
  values_[key] = raw_value;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double v = 0;
  if (!parse_number(it->second, v)) throw ConfigError(key + ": expected a number, got " + it->second);
  return v;
}

std::uint64_t FlatConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got " + s);
  }
  return v;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError(key + ": expected true or false, got " + it->second);
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& s = it->second;
  if (s.size() < 2 || s.front() != '"') throw ConfigError(key + ": expected a quoted string, got " + s);
  return s.substr(1, s.size() - 2);
}

std::vector<double> FlatConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> items;
  if (!split_array(it->second, items)) throw ConfigError(key + ": expected an array, got " + it->second);
  std::vector<double> out;
  for (const auto& s : items) {
    double v = 0;
    if (!parse_number(s, v)) throw ConfigError(key + ": non-numeric array entry " + s);
    out.push_back(v);
  }
  return out;
}

void FlatConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key " + key);
  }
}

TrainConfig desk_profile() { return TrainConfig{}; }

TrainConfig paper_profile() {
  TrainConfig t;
  t.epochs = 5;
  t.batch_size = 128;
  t.lr = 4e-5;
  t.weight_decay = 5e-4;
  t.dropout = 0.1;
  t.model.dim = 768;
  t.model.num_layers = 8;
  t.model.heads = 8;
  t.model.num_experts = 5;
  t.model.top_k = 2;
  t.model.codebook_size = 20480;
  t.model.tau = 0.93;
  return t;
}

TrainConfig TrainConfig::from_flat(const FlatConfig& cfg) {
  cfg.require_known(known_keys());
  const std::string profile = cfg.get_string("profile", "desk");
  TrainConfig t;
  if (profile == "paper") {
    t = paper_profile();
  } else if (profile != "desk") {
    throw ConfigError("profile: expected \"desk\" or \"paper\", got \"" + profile + "\"");
  }
  t.epochs = cfg.get_uint("train.epochs", t.epochs);
  t.steps_per_epoch = cfg.get_uint("train.steps_per_epoch", t.steps_per_epoch);
  t.batch_size = cfg.get_uint("train.batch_size", t.batch_size);
  t.lr = cfg.get_double("train.lr", t.lr);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.dropout = cfg.get_double("train.dropout", t.dropout);
  t.hops = cfg.get_uint("train.hops", t.hops);
  t.edge_holdout_p = cfg.get_double("train.edge_holdout_p", t.edge_holdout_p);
  t.dataset_weights = cfg.get_doubles("train.dataset_weights", t.dataset_weights);
  t.seed = cfg.get_uint("train.seed", t.seed);
  t.mask.node_p = cfg.get_double("mask.node_p", t.mask.node_p);
  t.mask.modality_p = cfg.get_double("mask.modality_p", t.mask.modality_p);
  t.mask.dim_p = cfg.get_double("mask.dim_p", t.mask.dim_p);
  auto& w = t.weights;
  w.feat = cfg.get_double("loss.beta_feat", w.feat);
  w.topo = cfg.get_double("loss.beta_topo", w.topo);
  w.gen = cfg.get_double("loss.beta_gen", w.gen);
  w.vq = cfg.get_double("loss.beta_vq", w.vq);
  w.load = cfg.get_double("loss.beta_load", w.load);
  w.inter = cfg.get_double("loss.beta_inter", w.inter);
  w.masked_only = cfg.get_bool("loss.masked_only", w.masked_only);
  auto& m = t.model;
  m.dim = cfg.get_uint("model.dim", m.dim);
  m.num_layers = cfg.get_uint("model.num_layers", m.num_layers);
  m.heads = cfg.get_uint("model.heads", m.heads);
  m.num_experts = cfg.get_uint("model.num_experts", m.num_experts);
  m.top_k = cfg.get_uint("model.top_k", m.top_k);
  m.codebook_size = cfg.get_uint("model.codebook_size", m.codebook_size);
  m.tau = cfg.get_double("model.tau", m.tau);
  m.gamma = cfg.get_double("model.gamma", m.gamma);
  m.interaction = cfg.get_bool("model.interaction", m.interaction);
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (steps_per_epoch < 1) throw ConfigError("train.steps_per_epoch must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout must lie in [0, 1)");
  if (!(edge_holdout_p >= 0.0 && edge_holdout_p < 1.0)) throw ConfigError("train.edge_holdout_p must lie in [0, 1)");
  for (double p : {mask.node_p, mask.modality_p, mask.dim_p}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask probabilities must lie in [0, 1]");
  }
  for (double v : dataset_weights) {
    if (!(v >= 0.0)) throw ConfigError("train.dataset_weights must be non-negative");
  }
  if (!dataset_weights.empty() && std::all_of(dataset_weights.begin(), dataset_weights.end(), [](double v) { return v == 0.0; })) {
    throw ConfigError("train.dataset_weights must not all be zero");
  }
  weights.validate();
  if (model.dim == 0 || model.heads == 0 || model.dim % model.heads != 0) {
    throw ConfigError("model.heads must divide model.dim");
  }
  if (model.interaction && (model.top_k < 1 || model.top_k > model.num_experts)) {
    throw ConfigError("model.top_k must lie in [1, model.num_experts]");
  }
  if (model.interaction && model.codebook_size == 0) throw ConfigError("model.codebook_size must be positive");
  if (!(model.tau > 0.0)) throw ConfigError("model.tau must be positive");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["train.epochs"] = std::to_string(epochs);
  m["train.steps_per_epoch"] = std::to_string(steps_per_epoch);
  m["train.batch_size"] = std::to_string(batch_size);
  m["train.lr"] = fmt_double(lr);
  m["train.weight_decay"] = fmt_double(weight_decay);
  m["train.dropout"] = fmt_double(dropout);
  m["train.hops"] = std::to_string(hops);
  m["train.edge_holdout_p"] = fmt_double(edge_holdout_p);
  std::string dw = "[";
  for (std::size_t i = 0; i < dataset_weights.size(); ++i) dw += (i ? ", " : "") + fmt_double(dataset_weights[i]);
  m["train.dataset_weights"] = dw + "]";
  m["train.seed"] = std::to_string(seed);
  m["mask.node_p"] = fmt_double(mask.node_p);
  m["mask.modality_p"] = fmt_double(mask.modality_p);
  m["mask.dim_p"] = fmt_double(mask.dim_p);
  m["loss.beta_feat"] = fmt_double(weights.feat);
  m["loss.beta_topo"] = fmt_double(weights.topo);
  m["loss.beta_gen"] = fmt_double(weights.gen);
  m["loss.beta_vq"] = fmt_double(weights.vq);
  m["loss.beta_load"] = fmt_double(weights.load);
  m["loss.beta_inter"] = fmt_double(weights.inter);
  m["loss.masked_only"] = weights.masked_only ? "true" : "false";
  m["model.dim"] = std::to_string(model.dim);
  m["model.num_layers"] = std::to_string(model.num_layers);
  m["model.heads"] = std::to_string(model.heads);
  m["model.num_experts"] = std::to_string(model.num_experts);
  m["model.top_k"] = std::to_string(model.top_k);
  m["model.codebook_size"] = std::to_string(model.codebook_size);
  m["model.tau"] = fmt_double(model.tau);
  m["model.gamma"] = fmt_double(model.gamma);
  m["model.interaction"] = model.interaction ? "true" : "false";
  return m;
}

}  // namespace planet
