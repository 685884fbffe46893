// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include "binio.hpp"
#include "patchfuse/errors.hpp"

namespace patchfuse {
namespace {
constexpr char kMagic[] = "PFCKPT01";
constexpr std::size_t kMagicLen = 8;
}  // namespace

Precision parse_precision(const std::string& s) {
  if (s == "f64" || s == "64") return Precision::f64;
  if (s == "f32" || s == "32") return Precision::f32;
  throw ConfigError("unknown precision '" + s + "' (expected f64 or f32)");
}

const char* precision_name(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw LookupError("checkpoint has no tensor '" + name + "'");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, kMagicLen);
    binio::put_string(out, ckpt.header.dump());
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& nt : ckpt.tensors) {
      binio::put_string(out, nt.name);
      out.put(static_cast<char>(nt.precision == Precision::f64 ? 8 : 4));
      binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.shape.size()));
      for (auto d : nt.tensor.shape) binio::put_uint<std::uint64_t>(out, d);
      for (double v : nt.tensor.data) {
        if (nt.precision == Precision::f64) {
          binio::put_f64(out, v);
        } else {
          binio::put_f32(out, static_cast<float>(v));
        }
      }
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  binio::expect_magic(in, kMagic, kMagicLen, "checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(binio::get_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  const auto count = binio::get_uint<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name = binio::get_string(in, 4096);
    const int width = in.get();
    if (width != 4 && width != 8) throw IoError("tensor '" + nt.name + "' has unsupported element width");
    nt.precision = width == 8 ? Precision::f64 : Precision::f32;
    const auto rank = binio::get_uint<std::uint32_t>(in);
    if (rank > 8) throw IoError("tensor '" + nt.name + "' rank too large");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(binio::get_uint<std::uint64_t>(in));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = width == 8 ? binio::get_f64(in) : static_cast<double>(binio::get_f32(in));
    nt.tensor = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(nt));
  }
  return ckpt;
}

std::vector<NamedTensor> snapshot_parameters(const ParameterStore& params, Precision precision) {
  std::vector<NamedTensor> out;
  for (const Parameter& p : params) {
    Tensor t(p.value.shape, p.value.data);
    out.push_back({p.name, std::move(t), precision});
  }
  return out;
}

void restore_parameters(ParameterStore& params, const std::vector<NamedTensor>& tensors) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t);
  for (Parameter& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw LookupError("checkpoint is missing parameter '" + p.name + "'");
    if (it->second->tensor.shape != p.value.shape) {
      throw ShapeError("parameter '" + p.name + "' has shape " + shape_str(p.value.shape) +
                       " but checkpoint stores " + shape_str(it->second->tensor.shape));
    }
    p.value.data = it->second->tensor.data;
  }
}

void round_to_f32(Tensor& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace patchfuse
