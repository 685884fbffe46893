// SPDX-License-Identifier: Apache-2.0
//
// Source encoders. A text encoder serves the report and commit message, a
// separate code encoder serves the added and deleted patch lines. Two
// backends exist: a small trainable transformer block over a corpus
// vocabulary, and a read-only store of embeddings dumped offline by an
// external model.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/autodiff.hpp"
#include "patchfuse/fusion.hpp"
#include "patchfuse/sample.hpp"

namespace patchfuse {

enum class SourceField { description, message, patch_add, patch_del };

/// Corpus key of the field: text, message, patch_add, patch_del.
const char* field_name(SourceField f);
SourceField parse_field(const std::string& s);
const std::string& field_text(const Sample& s, SourceField f);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kCls = 1;
  static constexpr std::size_t kUnk = 2;

  Vocabulary();
  /// Tokens seen at least `min_freq` times, most frequent first, ties by
  /// byte order.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t min_freq);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Lowercases and splits at whitespace and at every punctuation character;
/// each punctuation character becomes its own token.
std::vector<std::string> split_tokens(std::string_view text);

struct TokenizerSpec {
  Vocabulary vocab;
  std::size_t max_length = 32;
  std::size_t pad_id = Vocabulary::kPad;
  std::size_t cls_id = Vocabulary::kCls;
  std::size_t unk_id = Vocabulary::kUnk;

  void validate() const;
};

struct TokenizedText {
  std::vector<std::size_t> ids;     // exactly max_length
  std::size_t valid_len = 0;        // CLS + kept tokens
  std::vector<std::string> tokens;  // the kept surface tokens, "[CLS]" first
};

/// CLS first, tail truncation to max_length, pad to max_length.
TokenizedText tokenize(std::string_view text, const TokenizerSpec& spec);

/// Fixed sinusoidal position table [L x d].
Tensor sinusoidal_positions(std::size_t length, std::size_t d);

/// Encoder output as plain tensors (storage and inspection).
struct StoredEncoding {
  Tensor hidden;   // [L x d]
  Tensor summary;  // [d]
  std::size_t valid_len = 1;

  bool operator==(const StoredEncoding&) const = default;
};

/// Common interface of both backends.
class SourceEncoder {
 public:
  virtual ~SourceEncoder() = default;
  virtual EncodedSource encode(Tape& tape, const Sample& sample, SourceField field, bool train,
                               CounterRng& rng) const = 0;
  virtual std::size_t d() const = 0;
  virtual std::size_t max_length() const = 0;
  /// Surface tokens for explanation axes.
  virtual std::vector<std::string> surface_tokens(const Sample& sample, SourceField field) const = 0;
};

struct MicroEncoderOptions {
  std::size_t d = 64;
  std::size_t heads = 8;
  std::size_t ffn_multiplier = 2;
  double dropout = 0.0;
  bool mask_padding = false;
};

/// Token embedding + sinusoidal positions, one self-attention block with a
/// residual, and a rectified feed-forward block with a residual. Rows at pad
/// positions stay the (position-encoded) pad embedding; the summary is the
/// CLS row.
class MicroEncoder : public SourceEncoder {
 public:
  MicroEncoder(ParameterStore& store, const std::string& prefix, TokenizerSpec spec, MicroEncoderOptions opts,
               CounterRng& init_rng);

  EncodedSource encode_ids(Tape& tape, const std::vector<std::size_t>& ids, std::size_t valid_len, bool train,
                           CounterRng& rng) const;
  EncodedSource encode_text(Tape& tape, std::string_view text, bool train, CounterRng& rng) const;

  EncodedSource encode(Tape& tape, const Sample& sample, SourceField field, bool train,
                       CounterRng& rng) const override;
  std::size_t d() const override { return opts_.d; }
  std::size_t max_length() const override { return spec_.max_length; }
  std::vector<std::string> surface_tokens(const Sample& sample, SourceField field) const override;

  const TokenizerSpec& tokenizer() const { return spec_; }
  Parameter& embedding_table() const { return *embed_; }

 private:
  TokenizerSpec spec_;
  MicroEncoderOptions opts_;
  Tensor positions_;
  Parameter* embed_ = nullptr;
  MultiHeadAttention attention_;
  Parameter* ffn_w1_ = nullptr;
  Parameter* ffn_b1_ = nullptr;
  Parameter* ffn_w2_ = nullptr;
  Parameter* ffn_b2_ = nullptr;
};

/// Directory of per-(sample, field) binary tensor files plus index.json.
///
/// Tensor file: magic "PFEMB001", u32 L, u32 d, u32 valid_len, then L*d
/// binary64 hidden values row-major and d binary64 summary values, all
/// little-endian. index.json: {"format": "patchfuse-embeddings", "version": 1,
/// "entries": [{"sample_id", "field", "file"}, ...]}.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::filesystem::path dir);

  /// Loads index.json from the directory.
  static EmbeddingStore open(const std::filesystem::path& dir);

  void put(const std::string& sample_id, SourceField field, const StoredEncoding& enc);
  StoredEncoding get(const std::string& sample_id, SourceField field) const;
  bool contains(const std::string& sample_id, SourceField field) const;
  void save_index() const;
  std::size_t size() const { return index_.size(); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::map<std::pair<std::string, std::string>, std::string> index_;
};

void write_encoding_file(const std::filesystem::path& path, const StoredEncoding& enc);
StoredEncoding read_encoding_file(const std::filesystem::path& path);

/// Returns stored tensors unchanged as non-trainable constants.
class PrecomputedEncoder : public SourceEncoder {
 public:
  PrecomputedEncoder(EmbeddingStore store, std::size_t d, std::size_t max_length);

  EncodedSource encode(Tape& tape, const Sample& sample, SourceField field, bool train,
                       CounterRng& rng) const override;
  std::size_t d() const override { return d_; }
  std::size_t max_length() const override { return max_length_; }
  std::vector<std::string> surface_tokens(const Sample& sample, SourceField field) const override;

  /// Lookup with shape checks; missing keys raise LookupError naming both.
  StoredEncoding lookup(const std::string& sample_id, SourceField field) const;

 private:
  EmbeddingStore store_;
  std::size_t d_;
  std::size_t max_length_;
};

nlohmann::json vocabulary_to_json(const Vocabulary& v);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

}  // namespace patchfuse
