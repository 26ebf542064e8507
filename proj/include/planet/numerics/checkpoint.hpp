// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "planet/numerics/optimizer.hpp"
#include "planet/numerics/tensor.hpp"

namespace planet {

/// Ordered named tensors as stored in a checkpoint file.
///
/// File layout (all integers little-endian):
///   "PLNT1" | u32 version
///   repeated until EOF:
///     u32 name_len | name bytes (UTF-8) | u32 rank | u64 dims[rank] | f64 payload[prod(dims)]
using TensorEntries = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const TensorEntries& entries);
TensorEntries read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const TensorEntries& entries);
TensorEntries decode_checkpoint(const std::string& bytes);

/// Parameter values in store order.
TensorEntries parameter_entries(const ParameterStore& params);
/// Moments as "<name>/m" and "<name>/v" plus "optimizer/step".
TensorEntries optimizer_entries(const ParameterStore& params, const AdamW& opt);

/// Copies matching entries into the store. Every parameter must be present
/// with an identical shape, otherwise FormatError.
void load_parameters(ParameterStore& params, const TensorEntries& entries);
/// Restores optimizer moments; FormatError if any is missing.
void load_optimizer(const ParameterStore& params, AdamW& opt, const TensorEntries& entries);

const Tensor* find_entry(const TensorEntries& entries, const std::string& name);

}  // namespace planet
