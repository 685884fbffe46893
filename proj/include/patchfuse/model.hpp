// SPDX-License-Identifier: Apache-2.0
//
// The end-to-end model: encoders, fusion blocks, and the two heads, wired
// according to the configured variant.
//
//   full             fused 5d vector → head
//   i / c / p        report / message / patch summary alone (d)
//   CLS, fusion-concat   [cls_t, cls_c, cls_a, cls_d] (4d)
//   att1             [V'_T, cls_t, cls_p] (3d)
//   att2             [V'_C, cls_c, cls_p] (3d)
//   att12            [pooled report attention, pooled message attention] (2d)
//   fusion-hard/avg/weighted   one head per source (report, message, patch)
//                    combined by majority vote, mean probability, or a
//                    trained affine layer over the member probabilities

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchfuse/checkpoint.hpp"
#include "patchfuse/config.hpp"
#include "patchfuse/encoder.hpp"
#include "patchfuse/fusion.hpp"
#include "patchfuse/heads.hpp"

namespace patchfuse {

enum class Wiring { full, report_only, message_only, patch_only, summaries, att1, att2, att12, vote_hard, vote_avg, vote_weighted };

Wiring wiring_for(const std::string& variant);
/// Width of the vector fed to a single-head variant (0 for voting).
std::size_t head_input_width(Wiring w, std::size_t d);

/// A head for one task, either a single FCN or a per-source ensemble.
class TaskHead {
 public:
  TaskHead() = default;
  TaskHead(ParameterStore& store, const std::string& prefix, Wiring wiring, std::size_t d, std::size_t classes,
           double dropout, CounterRng& init_rng);

  struct Output {
    std::vector<Var> member_logits;  // one per FCN
    Var combined_logits;             // weighted voting only
    std::vector<double> probs;
    std::size_t label = 0;
  };

  /// `inputs` holds the single feature vector, or the report/message/patch
  /// summaries for voting heads.
  Output forward(Tape& tape, const std::vector<Var>& inputs, bool train, CounterRng& rng) const;
  /// Sum of member cross-entropies (plus the combiner's for weighted voting).
  Var loss(const Output& out, std::size_t label) const;

  bool voting() const { return members_.size() > 1; }
  const Fcn& member(std::size_t i) const { return members_.at(i); }
  std::size_t member_count() const { return members_.size(); }

 private:
  Wiring wiring_ = Wiring::full;
  std::size_t classes_ = 0;
  std::vector<Fcn> members_;
  Parameter* combine_w_ = nullptr;  // [members*classes x classes]
  Parameter* combine_b_ = nullptr;
};

struct ModelOutput {
  TaskHead::Output identification;
  std::optional<TaskHead::Output> type;
  std::optional<AttentionMap> report_map;
  std::optional<AttentionMap> message_map;
  Var fused;  // full variant only
};

class Model {
 public:
  /// Builds vocabularies from `train` (when a micro backend is used) and
  /// initializes parameters from config.seed.
  static std::unique_ptr<Model> create(const ModelConfig& config, const std::vector<Sample>& train);
  static std::unique_ptr<Model> create(const ModelConfig& config, Vocabulary text_vocab, Vocabulary code_vocab);
  static std::unique_ptr<Model> load(const std::filesystem::path& checkpoint,
                                     const std::string& embeddings_dir_override = "");

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ModelOutput forward(Tape& tape, const Sample& sample, bool train, CounterRng& rng, bool capture,
                      bool with_type) const;

  /// Eval-mode predictions for both heads.
  ModelOutput predict(const Sample& sample, bool capture = false) const;
  /// Type prediction only when the first stage says vulnerability-related.
  TwoStageResult two_stage_predict(const Sample& sample) const;

  Checkpoint to_checkpoint() const;
  void save(const std::filesystem::path& path) const;

  const ModelConfig& config() const { return config_; }
  Wiring wiring() const { return wiring_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const Vocabulary& text_vocab() const { return text_vocab_; }
  const Vocabulary& code_vocab() const { return code_vocab_; }
  const TaskHead& identification_head() const { return id_head_; }
  const TaskHead& type_head() const { return type_head_; }
  const FusionLayer* fusion() const { return fusion_ ? &*fusion_ : nullptr; }
  const SourceEncoder& encoder_for(SourceField field) const;

 private:
  Model(ModelConfig config, Vocabulary text_vocab, Vocabulary code_vocab);

  ModelConfig config_;
  Wiring wiring_;
  Vocabulary text_vocab_;
  Vocabulary code_vocab_;
  ParameterStore params_;
  std::unique_ptr<SourceEncoder> text_encoder_;
  std::unique_ptr<SourceEncoder> message_encoder_;  // null when shared with text
  std::unique_ptr<SourceEncoder> code_encoder_;     // null when shared with text
  std::optional<FusionLayer> fusion_;
  TaskHead id_head_;
  TaskHead type_head_;
};

}  // namespace patchfuse
