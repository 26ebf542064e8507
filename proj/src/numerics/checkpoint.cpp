// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "planet/numerics/binary_io.hpp"
#include "planet/numerics/errors.hpp"

namespace planet {

namespace {

constexpr std::string_view kMagic = "PLNT1";

}  // namespace

std::string encode_checkpoint(const TensorEntries& entries) {
  std::string out(kMagic);
  binary::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : entries) {
    binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binary::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) binary::put_le<double>(out, v);
  }
  return out;
}

TensorEntries decode_checkpoint(const std::string& bytes) {
  binary::Reader in(bytes);
  if (in.take(kMagic.size(), "magic") != kMagic) throw FormatError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  TensorEntries entries;
  while (!in.done()) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name(in.take(name_len, "name"));
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("checkpoint: entry " + name + " has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>("dims"));
    const std::size_t n = shape_size(shape);
    if (n > in.remaining() / 8) throw FormatError("checkpoint: entry " + name + " payload truncated");
    std::vector<double> data(n);
    for (auto& v : data) v = in.get<double>("payload");
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const TensorEntries& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(entries);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("checkpoint: write failed for " + path.string());
}

TensorEntries read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

TensorEntries parameter_entries(const ParameterStore& params) {
  TensorEntries out;
  for (const auto& p : params) out.emplace_back(p->name, p->value);
  return out;
}

TensorEntries optimizer_entries(const ParameterStore& params, const AdamW& opt) {
  TensorEntries out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.emplace_back(params[i].name + "/m", opt.first_moments()[i]);
    out.emplace_back(params[i].name + "/v", opt.second_moments()[i]);
  }
  out.emplace_back("optimizer/step", Tensor::scalar(static_cast<double>(opt.step_count())));
  return out;
}

const Tensor* find_entry(const TensorEntries& entries, const std::string& name) {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

void load_parameters(ParameterStore& params, const TensorEntries& entries) {
  for (auto& p : params) {
    const Tensor* t = find_entry(entries, p->name);
    if (t == nullptr) throw FormatError("checkpoint: missing parameter " + p->name);
    if (t->shape() != p->value.shape()) {
      throw FormatError("checkpoint: parameter " + p->name + " has shape " + shape_str(t->shape()) + ", expected " +
                        shape_str(p->value.shape()));
    }
    p->value = *t;
  }
}

void load_optimizer(const ParameterStore& params, AdamW& opt, const TensorEntries& entries) {
  std::vector<Tensor> m, v;
  for (const auto& p : params) {
    const Tensor* tm = find_entry(entries, p->name + "/m");
    const Tensor* tv = find_entry(entries, p->name + "/v");
    if (tm == nullptr || tv == nullptr) throw FormatError("checkpoint: missing optimizer state for " + p->name);
    m.push_back(*tm);
    v.push_back(*tv);
  }
  const Tensor* step = find_entry(entries, "optimizer/step");
  if (step == nullptr) throw FormatError("checkpoint: missing optimizer/step");
  opt.restore(std::move(m), std::move(v), static_cast<std::uint64_t>(step->item()));
}

}  // namespace planet
