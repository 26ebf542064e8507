// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace planet {

/// Counter-based 64-bit generator.
///
/// The i-th draw of a stream is `mix(key + (i + 1) * 0x9E3779B97F4A7C15)`
/// where `mix` is the SplitMix64 finalizer. The key of a stream is derived
/// from a parent key and a stream name, so independent consumers (masking,
/// negative sampling, init, dropout) can each own a named sub-stream and
/// adding draws to one never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed)) {}

  /// Named child stream. Does not advance this stream.
  [[nodiscard]] Rng stream(std::string_view name) const;
  /// Indexed child stream. Does not advance this stream.
  [[nodiscard]] Rng stream(std::string_view name, std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one draw pair per call, second discarded).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace planet
