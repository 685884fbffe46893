// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/config.hpp"

#include <algorithm>

#include "patchfuse/errors.hpp"

namespace patchfuse {

const std::vector<std::string>& variant_tags() {
  static const std::vector<std::string> tags = {
      "full", "i", "c", "p", "CLS", "att1", "att2", "att12",
      "fusion-hard", "fusion-avg", "fusion-weighted", "fusion-concat"};
  return tags;
}

EncoderBackend parse_backend(const std::string& s) {
  if (s == "micro") return EncoderBackend::micro;
  if (s == "precomputed") return EncoderBackend::precomputed;
  throw ConfigError("unknown encoder backend '" + s + "' (expected micro or precomputed)");
}

const char* backend_name(EncoderBackend b) { return b == EncoderBackend::micro ? "micro" : "precomputed"; }

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d = 768;
  c.max_length = 512;
  c.heads = 8;
  c.dropout = 0.3;
  c.lr = 5e-5;
  return c;
}

void ModelConfig::validate() const {
  if (d == 0) throw ConfigError("d must be positive");
  if (heads == 0) throw ConfigError("heads must be positive");
  if (d % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
  }
  if (max_length < 1) throw ConfigError("max_length must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (lr < 0.0) throw ConfigError("lr must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("betas must be in [0, 1)");
  if (eps <= 0.0) throw ConfigError("eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (ffn_multiplier == 0) throw ConfigError("ffn_multiplier must be positive");
  const auto& tags = variant_tags();
  if (std::find(tags.begin(), tags.end(), variant) == tags.end()) {
    throw ConfigError("unknown variant '" + variant + "'");
  }
  if ((text_backend == EncoderBackend::precomputed || code_backend == EncoderBackend::precomputed) &&
      embeddings_dir.empty()) {
    throw ConfigError("precomputed backend requires embeddings_dir");
  }
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"d", c.d},
      {"max_length", c.max_length},
      {"heads", c.heads},
      {"dropout", c.dropout},
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"eps", c.eps},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"text_backend", backend_name(c.text_backend)},
      {"code_backend", backend_name(c.code_backend)},
      {"embeddings_dir", c.embeddings_dir},
      {"min_token_freq", c.min_token_freq},
      {"ffn_multiplier", c.ffn_multiplier},
      {"separate_message_encoder", c.separate_message_encoder},
      {"share_text_code_encoder", c.share_text_code_encoder},
      {"mask_padding", c.mask_padding},
      {"variant", c.variant},
      {"train_type_head", c.train_type_head},
      {"decouple_type_head", c.decouple_type_head},
      {"precision", precision_name(c.precision)},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d = j.value("d", c.d);
    c.max_length = j.value("max_length", c.max_length);
    c.heads = j.value("heads", c.heads);
    c.dropout = j.value("dropout", c.dropout);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.text_backend = parse_backend(j.value("text_backend", std::string("micro")));
    c.code_backend = parse_backend(j.value("code_backend", std::string("micro")));
    c.embeddings_dir = j.value("embeddings_dir", c.embeddings_dir);
    c.min_token_freq = j.value("min_token_freq", c.min_token_freq);
    c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
    c.separate_message_encoder = j.value("separate_message_encoder", c.separate_message_encoder);
    c.share_text_code_encoder = j.value("share_text_code_encoder", c.share_text_code_encoder);
    c.mask_padding = j.value("mask_padding", c.mask_padding);
    c.variant = j.value("variant", c.variant);
    c.train_type_head = j.value("train_type_head", c.train_type_head);
    c.decouple_type_head = j.value("decouple_type_head", c.decouple_type_head);
    c.precision = parse_precision(j.value("precision", std::string("f64")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

}  // namespace patchfuse
