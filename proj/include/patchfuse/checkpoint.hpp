// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container.
//
//   magic      8 bytes  "PFCKPT01"
//   header     u32 length + UTF-8 JSON (model config, vocabularies, metadata)
//   count      u32 number of tensors
//   tensor*    u32 name length + name bytes
//              u8  element width in bytes (4 = IEEE binary32, 8 = binary64)
//              u32 rank, then rank x u64 dimensions
//              payload, row-major
//
// Every integer and float is little-endian regardless of host order.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/autodiff.hpp"

namespace patchfuse {

enum class Precision { f64, f32 };

Precision parse_precision(const std::string& s);
const char* precision_name(Precision p);

struct NamedTensor {
  std::string name;
  Tensor tensor;
  Precision precision = Precision::f64;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter in the store, in registration order.
std::vector<NamedTensor> snapshot_parameters(const ParameterStore& params, Precision precision);
/// Copies matching tensors back into the store; every store parameter must be present.
void restore_parameters(ParameterStore& params, const std::vector<NamedTensor>& tensors);

/// Rounds every element to the nearest binary32 value.
void round_to_f32(Tensor& t);

}  // namespace patchfuse
