// SPDX-License-Identifier: Apache-2.0
#include "planet/magdata/io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "planet/numerics/binary_io.hpp"
#include "planet/numerics/errors.hpp"

namespace planet {

namespace {

constexpr std::string_view kMagicLine = "PLANETGRAPH 1";

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::size_t parse_count(const std::string& s, const char* key) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(std::string("graph header: bad value '") + s + "' for " + key);
  }
  return v;
}

struct Header {
  std::size_t nodes = 0, edges = 0, modalities = 0, anchor = 0, label_classes = 0;
  bool splits = false;
  std::vector<std::size_t> dims;
  std::vector<std::string> names;
};

Header parse_header(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != kMagicLine) throw FormatError("graph header: missing PLANETGRAPH 1 magic");
  const char* expected[] = {"nodes", "edges", "modalities", "dims", "names", "anchor", "labels", "splits"};
  Header h;
  std::size_t lineno = 1;
  for (const char* key : expected) {
    ++lineno;
    if (!std::getline(is, line)) throw FormatError(std::string("graph header: missing record '") + key + "'");
    const auto words = split_words(line);
    if (words.empty() || words[0] != key) {
      throw FormatError("graph header: line " + std::to_string(lineno) + " should start with '" + key + "'");
    }
    const std::string k = key;
    if (k == "dims" || k == "names") {
      if (words.size() != h.modalities + 1) {
        throw FormatError("graph header: '" + k + "' lists " + std::to_string(words.size() - 1) + " values for " +
                          std::to_string(h.modalities) + " modalities");
      }
      for (std::size_t i = 1; i < words.size(); ++i) {
        if (k == "dims") {
          h.dims.push_back(parse_count(words[i], key));
        } else {
          h.names.push_back(words[i]);
        }
      }
      continue;
    }
    if (words.size() != 2) throw FormatError("graph header: record '" + k + "' takes one value");
    const std::size_t v = parse_count(words[1], key);
    if (k == "nodes") h.nodes = v;
    if (k == "edges") h.edges = v;
    if (k == "modalities") h.modalities = v;
    if (k == "anchor") h.anchor = v;
    if (k == "labels") h.label_classes = v;
    if (k == "splits") {
      if (v > 1) throw FormatError("graph header: splits must be 0 or 1");
      h.splits = v == 1;
    }
  }
  if (!std::getline(is, line) || line != "data") throw FormatError("graph header: missing 'data' terminator");
  if (h.anchor >= h.modalities) throw FormatError("graph header: anchor index out of range");
  return h;
}

}  // namespace

std::string encode_graph(const MultimodalGraph& g) {
  std::ostringstream hdr;
  hdr << kMagicLine << '\n';
  hdr << "nodes " << g.num_nodes() << '\n';
  hdr << "edges " << g.num_edges() << '\n';
  hdr << "modalities " << g.num_modalities() << '\n';
  hdr << "dims";
  for (auto d : g.dims()) hdr << ' ' << d;
  hdr << "\nnames";
  for (const auto& n : g.modality_names()) hdr << ' ' << n;
  hdr << "\nanchor " << g.anchor() << '\n';
  hdr << "labels " << (g.has_labels() ? g.num_classes() : 0) << '\n';
  hdr << "splits " << (g.has_splits() ? 1 : 0) << '\n';
  hdr << "data\n";
  std::string out = hdr.str();
  for (const auto& x : g.features()) {
    for (double v : x.data()) binary::put_le<double>(out, v);
  }
  for (const auto& e : g.edges()) {
    binary::put_le<std::uint32_t>(out, e.u);
    binary::put_le<std::uint32_t>(out, e.v);
  }
  if (g.has_labels()) {
    for (auto l : g.labels()) binary::put_le<std::int32_t>(out, l);
  }
  if (g.has_splits()) {
    for (auto s : g.splits()) out.push_back(static_cast<char>(s));
  }
  return out;
}

MultimodalGraph decode_graph(const std::string& bytes) {
  const auto pos = bytes.find("\ndata\n");
  if (pos == std::string::npos) throw FormatError("graph header: missing 'data' terminator");
  const std::size_t body = pos + 6;
  const Header h = parse_header(std::string_view(bytes).substr(0, body));
  for (const auto& name : h.names) {
    if (name.empty()) throw FormatError("graph header: empty modality name");
  }
  binary::Reader in(std::string_view(bytes).substr(body));
  std::vector<Tensor> features;
  for (std::size_t m = 0; m < h.modalities; ++m) {
    const std::size_t n = h.nodes * h.dims[m];
    if (n > in.remaining() / 8) {
      throw FormatError("graph: feature section " + std::to_string(m) + " truncated (row count mismatch)");
    }
    std::vector<double> data(n);
    for (auto& v : data) v = in.get<double>("features");
    features.emplace_back(Shape{h.nodes, h.dims[m]}, std::move(data));
  }
  std::vector<Edge> edges(h.edges);
  for (std::size_t k = 0; k < h.edges; ++k) {
    if (in.remaining() < 8) throw FormatError("graph: edge section truncated at edge " + std::to_string(k));
    edges[k].u = in.get<std::uint32_t>("edge");
    edges[k].v = in.get<std::uint32_t>("edge");
    if (edges[k].u >= h.nodes || edges[k].v >= h.nodes) {
      throw FormatError("graph: edge " + std::to_string(k) + " (" + std::to_string(edges[k].u) + ", " +
                        std::to_string(edges[k].v) + ") references a node outside [0, " + std::to_string(h.nodes) + ")");
    }
  }
  std::vector<std::int32_t> labels;
  if (h.label_classes > 0) {
    labels.resize(h.nodes);
    for (auto& l : labels) l = in.get<std::int32_t>("labels");
  }
  std::vector<Split> splits;
  if (h.splits) {
    splits.resize(h.nodes);
    for (auto& s : splits) s = static_cast<Split>(in.get<std::uint8_t>("splits"));
  }
  if (!in.done()) throw FormatError("graph: " + std::to_string(in.remaining()) + " trailing bytes after last section");
  return MultimodalGraph(h.nodes, std::move(edges), h.names, h.anchor, std::move(features), std::move(labels),
                         h.label_classes, std::move(splits));
}

void save_graph(const MultimodalGraph& g, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("graph: cannot open " + path.string() + " for writing");
  const std::string bytes = encode_graph(g);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("graph: write failed for " + path.string());
}

MultimodalGraph load_graph(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("graph: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_graph(bytes);
}

}  // namespace planet
