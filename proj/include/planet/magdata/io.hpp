// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "planet/magdata/graph.hpp"

namespace planet {

/// Graph file layout.
///
/// A text header, one `key values...` record per line:
///
///     PLANETGRAPH 1
///     nodes <N>
///     edges <M>
///     modalities <K>
///     dims <d_0> ... <d_{K-1}>
///     names <name_0> ... <name_{K-1}>
///     anchor <index>
///     labels <num_classes>        (0 = no label section)
///     splits <0|1>
///     data
///
/// followed by binary sections, little-endian:
///   K feature matrices, N·d_m f64 each, row-major;
///   M edges as (u32 u, u32 v);
///   if labels > 0: N i32 labels;
///   if splits = 1: N u8 split codes (0 train, 1 val, 2 test).
std::string encode_graph(const MultimodalGraph& g);
MultimodalGraph decode_graph(const std::string& bytes);

void save_graph(const MultimodalGraph& g, const std::filesystem::path& path);
/// Throws FormatError on a missing file, malformed header, truncated
/// section, out-of-range edge (naming the edge index) or row-count mismatch.
MultimodalGraph load_graph(const std::filesystem::path& path);

}  // namespace planet
