// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/model.hpp"

#include "patchfuse/errors.hpp"

namespace patchfuse {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

bool uses_fusion(Wiring w) {
  return w == Wiring::full || w == Wiring::att1 || w == Wiring::att2 || w == Wiring::att12;
}

bool is_vote(Wiring w) { return w == Wiring::vote_hard || w == Wiring::vote_avg || w == Wiring::vote_weighted; }

struct NeededSources {
  bool report = true;
  bool message = true;
  bool patch = true;
};

NeededSources needed_sources(Wiring w) {
  switch (w) {
    case Wiring::report_only: return {true, false, false};
    case Wiring::message_only: return {false, true, false};
    case Wiring::patch_only: return {false, false, true};
    case Wiring::att1: return {true, false, true};
    case Wiring::att2: return {false, true, true};
    default: return {};
  }
}

std::vector<std::string> corpus_texts(const std::vector<Sample>& samples, std::initializer_list<SourceField> fields) {
  std::vector<std::string> out;
  for (const auto& s : samples)
    for (auto f : fields) out.push_back(field_text(s, f));
  return out;
}

}  // namespace

Wiring wiring_for(const std::string& variant) {
  if (variant == "full") return Wiring::full;
  if (variant == "i") return Wiring::report_only;
  if (variant == "c") return Wiring::message_only;
  if (variant == "p") return Wiring::patch_only;
  if (variant == "CLS" || variant == "fusion-concat") return Wiring::summaries;
  if (variant == "att1") return Wiring::att1;
  if (variant == "att2") return Wiring::att2;
  if (variant == "att12") return Wiring::att12;
  if (variant == "fusion-hard") return Wiring::vote_hard;
  if (variant == "fusion-avg") return Wiring::vote_avg;
  if (variant == "fusion-weighted") return Wiring::vote_weighted;
  throw ConfigError("unknown variant '" + variant + "'");
}

std::size_t head_input_width(Wiring w, std::size_t d) {
  switch (w) {
    case Wiring::full: return 5 * d;
    case Wiring::report_only:
    case Wiring::message_only:
    case Wiring::patch_only: return d;
    case Wiring::summaries: return 4 * d;
    case Wiring::att1:
    case Wiring::att2: return 3 * d;
    case Wiring::att12: return 2 * d;
    default: return 0;
  }
}

TaskHead::TaskHead(ParameterStore& store, const std::string& prefix, Wiring wiring, std::size_t d,
                   std::size_t classes, double dropout, CounterRng& init_rng)
    : wiring_(wiring), classes_(classes) {
  auto spec_for = [&](std::size_t width) {
    return classes == kIdentificationClasses ? FcnSpec::identification(d, dropout, width)
                                             : FcnSpec::type(d, dropout, width);
  };
  if (!is_vote(wiring)) {
    members_.emplace_back(store, prefix, spec_for(head_input_width(wiring, d)), init_rng);
    return;
  }
  for (const char* source : {"report", "message", "patch"}) {
    members_.emplace_back(store, prefix + "." + source, spec_for(d), init_rng);
  }
  if (wiring == Wiring::vote_weighted) {
    // Starts out as probability averaging.
    const std::size_t m = members_.size();
    Tensor w({m * classes, classes});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < classes; ++c) w(i * classes + c, c) = 1.0 / static_cast<double>(m);
    combine_w_ = &store.add(prefix + ".combine.w", std::move(w));
    combine_b_ = &store.add(prefix + ".combine.b", Tensor({classes}));
  }
}

TaskHead::Output TaskHead::forward(Tape& tape, const std::vector<Var>& inputs, bool train, CounterRng& rng) const {
  if (inputs.size() != members_.size()) {
    throw ShapeError("head expects " + std::to_string(members_.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  Output out;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    out.member_logits.push_back(members_[i].forward(tape, inputs[i], train, rng));
  }
  if (!voting()) {
    out.probs = kernels::softmax(out.member_logits.front().value()).data;
    out.label = argmax_lowest(out.probs);
    return out;
  }
  std::vector<std::vector<double>> member_probs;
  for (const auto& l : out.member_logits) member_probs.push_back(kernels::softmax(l.value()).data);
  switch (wiring_) {
    case Wiring::vote_hard: {
      auto [label, share] = hard_vote(member_probs);
      out.label = label;
      out.probs = std::move(share);
      break;
    }
    case Wiring::vote_avg:
      out.probs = average_vote(member_probs);
      out.label = argmax_lowest(out.probs);
      break;
    default: {
      std::vector<Var> probs;
      for (const auto& l : out.member_logits) probs.push_back(ops::softmax(l));
      Var joined = ops::reshape(ops::concat(probs, 0), {1, members_.size() * classes_});
      Var logits = ops::add_bias(ops::matmul(joined, tape.parameter(*combine_w_)), tape.parameter(*combine_b_));
      out.combined_logits = ops::reshape(logits, {classes_});
      out.probs = kernels::softmax(out.combined_logits.value()).data;
      out.label = argmax_lowest(out.probs);
      break;
    }
  }
  return out;
}

Var TaskHead::loss(const Output& out, std::size_t label) const {
  std::vector<Var> terms;
  for (const auto& l : out.member_logits) terms.push_back(ops::cross_entropy(l, label));
  if (out.combined_logits.valid()) terms.push_back(ops::cross_entropy(out.combined_logits, label));
  return ops::sum_scalars(terms);
}

Model::Model(ModelConfig config, Vocabulary text_vocab, Vocabulary code_vocab)
    : config_(std::move(config)),
      wiring_(wiring_for(config_.variant)),
      text_vocab_(std::move(text_vocab)),
      code_vocab_(std::move(code_vocab)) {
  config_.validate();
  CounterRng init(config_.seed, kInitStream);
  const MicroEncoderOptions opts{config_.d, config_.heads, config_.ffn_multiplier, config_.dropout,
                                 config_.mask_padding};
  std::optional<EmbeddingStore> embeddings;
  auto make_encoder = [&](EncoderBackend backend, const std::string& prefix,
                          const Vocabulary& vocab) -> std::unique_ptr<SourceEncoder> {
    if (backend == EncoderBackend::precomputed) {
      if (!embeddings) embeddings = EmbeddingStore::open(config_.embeddings_dir);
      return std::make_unique<PrecomputedEncoder>(*embeddings, config_.d, config_.max_length);
    }
    return std::make_unique<MicroEncoder>(params_, prefix, TokenizerSpec{vocab, config_.max_length}, opts, init);
  };
  text_encoder_ = make_encoder(config_.text_backend, "encoder.text", text_vocab_);
  if (config_.separate_message_encoder) {
    message_encoder_ = make_encoder(config_.text_backend, "encoder.message", text_vocab_);
  }
  if (!config_.share_text_code_encoder) {
    code_encoder_ = make_encoder(config_.code_backend, "encoder.code", code_vocab_);
  }
  if (uses_fusion(wiring_)) fusion_.emplace(params_, config_.d, config_.heads, config_.mask_padding, init);
  id_head_ = TaskHead(params_, "head.identification", wiring_, config_.d, kIdentificationClasses, config_.dropout, init);
  if (config_.train_type_head) {
    type_head_ = TaskHead(params_, "head.type", wiring_, config_.d, kTypeClasses, config_.dropout, init);
  }
}

std::unique_ptr<Model> Model::create(const ModelConfig& config, Vocabulary text_vocab, Vocabulary code_vocab) {
  return std::unique_ptr<Model>(new Model(config, std::move(text_vocab), std::move(code_vocab)));
}

std::unique_ptr<Model> Model::create(const ModelConfig& config, const std::vector<Sample>& train) {
  using F = SourceField;
  Vocabulary text, code;
  if (config.share_text_code_encoder) {
    text = Vocabulary::build(corpus_texts(train, {F::description, F::message, F::patch_add, F::patch_del}),
                             config.min_token_freq);
    code = text;
  } else {
    text = Vocabulary::build(corpus_texts(train, {F::description, F::message}), config.min_token_freq);
    code = Vocabulary::build(corpus_texts(train, {F::patch_add, F::patch_del}), config.min_token_freq);
  }
  return create(config, std::move(text), std::move(code));
}

const SourceEncoder& Model::encoder_for(SourceField field) const {
  switch (field) {
    case SourceField::description: return *text_encoder_;
    case SourceField::message: return message_encoder_ ? *message_encoder_ : *text_encoder_;
    default: return code_encoder_ ? *code_encoder_ : *text_encoder_;
  }
}

ModelOutput Model::forward(Tape& tape, const Sample& sample, bool train, CounterRng& rng, bool capture,
                           bool with_type) const {
  const NeededSources need = needed_sources(wiring_);
  EncodedSource report, message, added, deleted;
  if (need.report) report = encoder_for(SourceField::description).encode(tape, sample, SourceField::description, train, rng);
  if (need.message) message = encoder_for(SourceField::message).encode(tape, sample, SourceField::message, train, rng);
  if (need.patch) {
    added = encoder_for(SourceField::patch_add).encode(tape, sample, SourceField::patch_add, train, rng);
    deleted = encoder_for(SourceField::patch_del).encode(tape, sample, SourceField::patch_del, train, rng);
  }

  ModelOutput out;
  std::optional<FusionOutput> fused;
  if (fusion_) {
    const bool use_report = wiring_ != Wiring::att2;
    const bool use_message = wiring_ != Wiring::att1;
    fused = fusion_->fuse(tape, report, message, added, deleted, capture, use_report, use_message);
    out.report_map = fused->report_map;
    out.message_map = fused->message_map;
  }
  auto patch_cls = [&] { return fused ? fused->patch_summary : patch_summary(added.summary, deleted.summary); };

  std::vector<Var> inputs;
  switch (wiring_) {
    case Wiring::full:
      out.fused = fused->fused;
      inputs = {fused->fused};
      break;
    case Wiring::report_only: inputs = {report.summary}; break;
    case Wiring::message_only: inputs = {message.summary}; break;
    case Wiring::patch_only: inputs = {patch_cls()}; break;
    case Wiring::summaries:
      inputs = {ops::concat({report.summary, message.summary, added.summary, deleted.summary}, 0)};
      break;
    case Wiring::att1:
      inputs = {ops::concat({fused->report_residual, report.summary, fused->patch_summary}, 0)};
      break;
    case Wiring::att2:
      inputs = {ops::concat({fused->message_residual, message.summary, fused->patch_summary}, 0)};
      break;
    case Wiring::att12: inputs = {ops::concat({fused->pooled_report, fused->pooled_message}, 0)}; break;
    default: inputs = {report.summary, message.summary, patch_cls()}; break;
  }

  out.identification = id_head_.forward(tape, inputs, train, rng);
  if (with_type && config_.train_type_head) {
    std::vector<Var> type_inputs = inputs;
    if (config_.decouple_type_head)
      for (auto& v : type_inputs) v = ops::detach(v);
    out.type = type_head_.forward(tape, type_inputs, train, rng);
  }
  return out;
}

ModelOutput Model::predict(const Sample& sample, bool capture) const {
  Tape tape;
  CounterRng unused(0);
  return forward(tape, sample, false, unused, capture, true);
}

TwoStageResult Model::two_stage_predict(const Sample& sample) const {
  const ModelOutput out = predict(sample);
  TwoStageResult r;
  r.flag = Prediction{out.identification.probs, out.identification.label, Stage::identification};
  if (r.flag.label == 1 && out.type) r.type = Prediction{out.type->probs, out.type->label, Stage::type};
  return r;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.header = {{"format", "patchfuse-model"},
                 {"version", 1},
                 {"config", config_to_json(config_)},
                 {"text_vocab", vocabulary_to_json(text_vocab_)},
                 {"code_vocab", vocabulary_to_json(code_vocab_)}};
  ckpt.tensors = snapshot_parameters(params_, config_.precision);
  return ckpt;
}

void Model::save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

std::unique_ptr<Model> Model::load(const std::filesystem::path& path, const std::string& embeddings_dir_override) {
  const Checkpoint ckpt = read_checkpoint(path);
  const auto& h = ckpt.header;
  if (h.value("format", "") != "patchfuse-model") throw SchemaError("format", 0, "not a model checkpoint");
  for (const char* key : {"config", "text_vocab", "code_vocab"}) {
    if (!h.contains(key)) throw SchemaError(key, 0, "missing from checkpoint header");
  }
  ModelConfig config = config_from_json(h.at("config"));
  if (!embeddings_dir_override.empty()) config.embeddings_dir = embeddings_dir_override;
  auto model = create(config, vocabulary_from_json(h.at("text_vocab")), vocabulary_from_json(h.at("code_vocab")));
  restore_parameters(model->params_, ckpt.tensors);
  return model;
}

}  // namespace patchfuse
