// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/checkpoint.hpp"

namespace patchfuse {

enum class EncoderBackend { micro, precomputed };

/// full, i, c, p, CLS, att1, att2, att12, fusion-hard, fusion-avg,
/// fusion-weighted, fusion-concat
const std::vector<std::string>& variant_tags();

EncoderBackend parse_backend(const std::string& s);
const char* backend_name(EncoderBackend b);

/// Architecture and training hyperparameters.
struct ModelConfig {
  std::size_t d = 64;            // model width
  std::size_t max_length = 32;   // tokens per source, CLS included
  std::size_t heads = 8;
  double dropout = 0.3;

  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  std::uint64_t seed = 42;

  EncoderBackend text_backend = EncoderBackend::micro;
  EncoderBackend code_backend = EncoderBackend::micro;
  std::string embeddings_dir;     // precomputed-backend store
  std::size_t min_token_freq = 2;
  std::size_t ffn_multiplier = 2;
  bool separate_message_encoder = false;  // description and message share the text encoder
  bool share_text_code_encoder = false;
  bool mask_padding = false;

  std::string variant = "full";
  bool train_type_head = true;
  bool decouple_type_head = false;
  Precision precision = Precision::f64;

  static ModelConfig desk();
  static ModelConfig paper();

  /// Throws ConfigError on the first inconsistency.
  void validate() const;
  std::size_t head_dim() const { return d / heads; }
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace patchfuse
