// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "planet/magdata/sampling.hpp"
#include "planet/model/planet_model.hpp"
#include "planet/objective/objective.hpp"

namespace planet {

/// Flat `key = value` configuration text.
///
/// Grammar, one statement per line:
///   line   := blank | "#" comment | key "=" value [ "#" comment ]
///   key    := [A-Za-z0-9_.]+            (dots namespace the keys)
///   value  := number | true | false | "quoted string" | "[" value ("," value)* "]"
/// A key may appear once. Later `set` calls override earlier values.
class FlatConfig {
 public:
  /// Throws ConfigError naming the line on a syntax error or duplicate key.
  static FlatConfig parse(const std::string& text);
  static FlatConfig load(const std::filesystem::path& path);

  /// Parses `key=value` and overrides (or adds) the key.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& raw_value);

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError on the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }
  /// The text the configuration was parsed from, verbatim.
  [[nodiscard]] const std::string& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t steps_per_epoch = 40;
  std::size_t batch_size = 16;  // ego-batch centers per step
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double dropout = 0.1;
  std::size_t hops = 2;
  double edge_holdout_p = 0.15;
  MaskConfig mask{0.6, 0.4, 1.0};
  LossWeights weights{};
  /// One entry per pre-training graph; empty means equal weights.
  std::vector<double> dataset_weights;
  std::uint64_t seed = 0;

  ModelConfig model{};

  /// Reads every recognised key; unknown keys raise ConfigError.
  static TrainConfig from_flat(const FlatConfig& cfg);
  /// Throws ConfigError on an out-of-range value.
  void validate() const;
  /// Resolved values as a flat config, for manifests.
  [[nodiscard]] std::map<std::string, std::string> to_map() const;
};

/// Desk-scale defaults: d=32, L=2, H=4, K=3 experts, C=64, batch 16, lr 1e-3, 200 steps.
TrainConfig desk_profile();
/// Full-size pre-training hyperparameters (d=768, C=20480).
TrainConfig paper_profile();

}  // namespace planet
