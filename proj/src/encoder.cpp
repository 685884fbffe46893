// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "binio.hpp"
#include "patchfuse/errors.hpp"

namespace patchfuse {

const char* field_name(SourceField f) {
  switch (f) {
    case SourceField::description: return "text";
    case SourceField::message: return "message";
    case SourceField::patch_add: return "patch_add";
    case SourceField::patch_del: return "patch_del";
  }
  return "?";
}

SourceField parse_field(const std::string& s) {
  if (s == "text" || s == "description") return SourceField::description;
  if (s == "message") return SourceField::message;
  if (s == "patch_add") return SourceField::patch_add;
  if (s == "patch_del") return SourceField::patch_del;
  throw ConfigError("unknown source field '" + s + "'");
}

const std::string& field_text(const Sample& s, SourceField f) {
  switch (f) {
    case SourceField::description: return s.description;
    case SourceField::message: return s.commit_message;
    case SourceField::patch_add: return s.patch_add;
    case SourceField::patch_del: return s.patch_del;
  }
  return s.description;
}

Vocabulary::Vocabulary() : tokens_{"[PAD]", "[CLS]", "[UNK]"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t min_freq) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& tok : split_tokens(t)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (n < min_freq) break;
    if (v.ids_.count(tok)) continue;
    v.ids_.emplace(tok, v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[kPad] != "[PAD]" || tokens[kCls] != "[CLS]" || tokens[kUnk] != "[UNK]") {
    throw ConfigError("vocabulary must start with [PAD], [CLS], [UNK]");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], i).second) throw ConfigError("duplicate vocabulary token '" + v.tokens_[i] + "'");
  }
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c) && c != '_') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

void TokenizerSpec::validate() const {
  if (max_length < 1) throw ConfigError("tokenizer max_length must be at least 1");
  const std::size_t n = vocab.size();
  if (pad_id >= n || cls_id >= n || unk_id >= n) throw ConfigError("special token ids must be in the vocabulary");
  if (pad_id == cls_id || pad_id == unk_id || cls_id == unk_id) throw ConfigError("special token ids must be distinct");
}

TokenizedText tokenize(std::string_view text, const TokenizerSpec& spec) {
  TokenizedText out;
  out.ids.assign(spec.max_length, spec.pad_id);
  out.ids[0] = spec.cls_id;
  out.tokens.push_back("[CLS]");
  std::size_t pos = 1;
  for (auto& tok : split_tokens(text)) {
    if (pos >= spec.max_length) break;
    const std::size_t id = spec.vocab.id(tok);
    out.ids[pos++] = id == Vocabulary::kUnk ? spec.unk_id : id;
    out.tokens.push_back(std::move(tok));
  }
  out.valid_len = pos;
  return out;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d) {
  Tensor p({length, d});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      p(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

MicroEncoder::MicroEncoder(ParameterStore& store, const std::string& prefix, TokenizerSpec spec,
                           MicroEncoderOptions opts, CounterRng& init_rng)
    : spec_(std::move(spec)), opts_(opts), positions_(sinusoidal_positions(spec_.max_length, opts.d)) {
  spec_.validate();
  // Positions enter at 1/sqrt(d) of the unit-variance token embeddings.
  for (double& v : positions_.data) v /= std::sqrt(static_cast<double>(opts_.d));
  const std::size_t d = opts_.d;
  const std::size_t hidden = d * opts_.ffn_multiplier;
  Tensor table({spec_.vocab.size(), d});
  for (double& v : table.data) v = init_rng.normal();
  // Special tokens start at zero so they add no sample-invariant offset.
  for (std::size_t id : {spec_.pad_id, spec_.cls_id, spec_.unk_id})
    std::fill_n(table.data.begin() + static_cast<std::ptrdiff_t>(id * d), d, 0.0);
  embed_ = &store.add(prefix + ".embedding", std::move(table));
  attention_ = MultiHeadAttention(store, prefix + ".self_attention", d, opts_.heads, init_rng);
  ffn_w1_ = &store.add(prefix + ".ffn.w1", fan_in_uniform({d, hidden}, d, init_rng));
  ffn_b1_ = &store.add(prefix + ".ffn.b1", Tensor({hidden}));
  ffn_w2_ = &store.add(prefix + ".ffn.w2", fan_in_uniform({hidden, d}, hidden, init_rng));
  ffn_b2_ = &store.add(prefix + ".ffn.b2", Tensor({d}));
}

EncodedSource MicroEncoder::encode_ids(Tape& tape, const std::vector<std::size_t>& ids, std::size_t valid_len,
                                       bool train, CounterRng& rng) const {
  const std::size_t len = spec_.max_length;
  if (ids.size() != len) {
    throw ShapeError("encoder expects " + std::to_string(len) + " ids, got " + std::to_string(ids.size()));
  }
  if (valid_len < 1 || valid_len > len) throw ShapeError("valid_len must be in [1, L]");
  Var x = ops::add(ops::embedding(tape.parameter(*embed_), ids), tape.constant(positions_));

  std::vector<char> key_valid;
  if (opts_.mask_padding) {
    key_valid.assign(len, 0);
    std::fill_n(key_valid.begin(), valid_len, 1);
  }
  auto attn = attention_.forward(tape, x, x, opts_.mask_padding ? &key_valid : nullptr, false);
  Var h1 = ops::add(x, attn.output);
  Var ff = ops::relu(ops::add_bias(ops::matmul(h1, tape.parameter(*ffn_w1_)), tape.parameter(*ffn_b1_)));
  ff = ops::add_bias(ops::matmul(ff, tape.parameter(*ffn_w2_)), tape.parameter(*ffn_b2_));
  ff = ops::dropout(ff, opts_.dropout, train, rng);
  Var h2 = ops::add(h1, ff);

  EncodedSource out;
  out.valid_len = valid_len;
  out.summary = ops::row(h2, 0);
  out.hidden = valid_len == len
                   ? h2
                   : ops::concat({ops::slice_rows(h2, 0, valid_len), ops::slice_rows(x, valid_len, len)}, 0);
  return out;
}

EncodedSource MicroEncoder::encode_text(Tape& tape, std::string_view text, bool train, CounterRng& rng) const {
  const auto tok = tokenize(text, spec_);
  return encode_ids(tape, tok.ids, tok.valid_len, train, rng);
}

EncodedSource MicroEncoder::encode(Tape& tape, const Sample& sample, SourceField field, bool train,
                                   CounterRng& rng) const {
  return encode_text(tape, field_text(sample, field), train, rng);
}

std::vector<std::string> MicroEncoder::surface_tokens(const Sample& sample, SourceField field) const {
  return tokenize(field_text(sample, field), spec_).tokens;
}

void write_encoding_file(const std::filesystem::path& path, const StoredEncoding& enc) {
  const std::size_t len = enc.hidden.rows(), d = enc.hidden.cols();
  if (enc.summary.size() != d) throw ShapeError("summary width does not match hidden width");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file " + path.string());
  out.write("PFEMB001", 8);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(len));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(enc.valid_len));
  for (double v : enc.hidden.data) binio::put_f64(out, v);
  for (double v : enc.summary.data) binio::put_f64(out, v);
  if (!out) throw IoError("failed writing embedding file " + path.string());
}

StoredEncoding read_encoding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  binio::expect_magic(in, "PFEMB001", 8, "embedding");
  const auto len = binio::get_uint<std::uint32_t>(in);
  const auto d = binio::get_uint<std::uint32_t>(in);
  StoredEncoding enc;
  enc.valid_len = binio::get_uint<std::uint32_t>(in);
  enc.hidden = Tensor({len, d});
  for (double& v : enc.hidden.data) v = binio::get_f64(in);
  enc.summary = Tensor({d});
  for (double& v : enc.summary.data) v = binio::get_f64(in);
  return enc;
}

EmbeddingStore::EmbeddingStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& dir) {
  EmbeddingStore store(dir);
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("embedding store has no index.json: " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad embedding index: " + std::string(e.what()));
  }
  if (j.value("format", "") != "patchfuse-embeddings") throw IoError("unrecognized embedding index format");
  for (const auto& e : j.at("entries")) {
    store.index_[{e.at("sample_id").get<std::string>(), e.at("field").get<std::string>()}] =
        e.at("file").get<std::string>();
  }
  return store;
}

void EmbeddingStore::put(const std::string& sample_id, SourceField field, const StoredEncoding& enc) {
  std::filesystem::create_directories(dir_);
  const std::string file = "emb_" + std::to_string(index_.size()) + "_" + field_name(field) + ".bin";
  auto key = std::make_pair(sample_id, std::string(field_name(field)));
  auto it = index_.find(key);
  const std::string name = it == index_.end() ? file : it->second;
  write_encoding_file(dir_ / name, enc);
  index_[key] = name;
}

bool EmbeddingStore::contains(const std::string& sample_id, SourceField field) const {
  return index_.count({sample_id, field_name(field)}) != 0;
}

StoredEncoding EmbeddingStore::get(const std::string& sample_id, SourceField field) const {
  auto it = index_.find({sample_id, field_name(field)});
  if (it == index_.end()) {
    throw LookupError("no stored embedding for sample '" + sample_id + "' field '" + field_name(field) + "'");
  }
  return read_encoding_file(dir_ / it->second);
}

void EmbeddingStore::save_index() const {
  std::filesystem::create_directories(dir_);
  nlohmann::json j;
  j["format"] = "patchfuse-embeddings";
  j["version"] = 1;
  j["entries"] = nlohmann::json::array();
  for (const auto& [key, file] : index_) {
    j["entries"].push_back({{"sample_id", key.first}, {"field", key.second}, {"file", file}});
  }
  std::ofstream out(dir_ / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write embedding index in " + dir_.string());
  out << j.dump(1) << '\n';
}

PrecomputedEncoder::PrecomputedEncoder(EmbeddingStore store, std::size_t d, std::size_t max_length)
    : store_(std::move(store)), d_(d), max_length_(max_length) {}

StoredEncoding PrecomputedEncoder::lookup(const std::string& sample_id, SourceField field) const {
  StoredEncoding enc = store_.get(sample_id, field);
  if (enc.hidden.shape != Shape{max_length_, d_} || enc.summary.shape != Shape{d_}) {
    throw ShapeError("stored embedding for '" + sample_id + "' field '" + field_name(field) + "' has shape " +
                     shape_str(enc.hidden.shape) + ", expected " + shape_str({max_length_, d_}));
  }
  if (enc.valid_len < 1 || enc.valid_len > max_length_) {
    throw ShapeError("stored embedding for '" + sample_id + "' has valid_len outside [1, L]");
  }
  return enc;
}

EncodedSource PrecomputedEncoder::encode(Tape& tape, const Sample& sample, SourceField field, bool,
                                         CounterRng&) const {
  StoredEncoding enc = lookup(sample.id, field);
  enc.hidden.requires_grad = false;
  enc.summary.requires_grad = false;
  EncodedSource out;
  out.valid_len = enc.valid_len;
  out.hidden = tape.constant(std::move(enc.hidden));
  out.summary = tape.constant(std::move(enc.summary));
  return out;
}

std::vector<std::string> PrecomputedEncoder::surface_tokens(const Sample& sample, SourceField field) const {
  std::vector<std::string> toks{"[CLS]"};
  for (auto& t : split_tokens(field_text(sample, field))) {
    if (toks.size() >= max_length_) break;
    toks.push_back(std::move(t));
  }
  return toks;
}

nlohmann::json vocabulary_to_json(const Vocabulary& v) { return v.tokens(); }

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  return Vocabulary::from_tokens(j.get<std::vector<std::string>>());
}

}  // namespace patchfuse
