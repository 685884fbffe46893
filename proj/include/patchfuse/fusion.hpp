// SPDX-License-Identifier: Apache-2.0
//
// Multi-source fusion: report/message hidden states query the patch hidden
// states through two independent multi-head attention blocks; pooled outputs
// get the patch summary added back and are joined with every summary vector.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchfuse/autodiff.hpp"

namespace patchfuse {

/// Half-open column range of the key axis that holds real (non-pad) tokens.
struct KeySegment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct AttentionMap {
  Tensor per_head;  // [J x Lq x Lkv]
  Tensor averaged;  // [Lq x Lkv]
  std::size_t valid_q = 0;
  std::size_t valid_kv = 0;
  std::vector<KeySegment> kv_segments;
};

/// Projections {W_Q, W_K, W_V} (d x d, head j owns columns [j*dk, (j+1)*dk))
/// and W_O (d x d). No biases.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t d, std::size_t heads,
                     CounterRng& init_rng);

  struct Result {
    Var output;                        // [Lq x d]
    std::optional<AttentionMap> map;   // when capture
  };

  /// `key_valid` (length Lkv) masks pad keys when given.
  Result forward(Tape& tape, Var query_src, Var kv_src, const std::vector<char>* key_valid, bool capture) const;

  std::size_t d() const { return d_; }
  std::size_t heads() const { return heads_; }
  Parameter& wq() const { return *wq_; }
  Parameter& wk() const { return *wk_; }
  Parameter& wv() const { return *wv_; }
  Parameter& wo() const { return *wo_; }

 private:
  Parameter* wq_ = nullptr;
  Parameter* wk_ = nullptr;
  Parameter* wv_ = nullptr;
  Parameter* wo_ = nullptr;
  std::size_t d_ = 0;
  std::size_t heads_ = 0;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, CounterRng& rng);

/// One source after encoding: hidden states [L x d], summary [d], and the
/// number of leading rows that hold real tokens.
struct EncodedSource {
  Var hidden;
  Var summary;
  std::size_t valid_len = 0;
};

/// V_p: added rows first, then deleted rows.
Var patch_concat(Var added, Var deleted);
/// (a + b) / 2
Var patch_summary(Var added_summary, Var deleted_summary);
/// Column-wise mean of `attended` over its rows (or its first `rows` rows),
/// plus `residual`.
Var pool_and_residual(Var attended, Var residual, std::size_t rows = 0);

struct FusionOutput {
  Var fused;            // v_x [5d]
  Var pooled_report;    // V_T (before residual)
  Var pooled_message;   // V_C (before residual)
  Var report_residual;  // V'_T
  Var message_residual; // V'_C
  Var patch_summary;    // V_CLS_p
  std::optional<AttentionMap> report_map;
  std::optional<AttentionMap> message_map;
};

class FusionLayer {
 public:
  FusionLayer() = default;
  FusionLayer(ParameterStore& store, std::size_t d, std::size_t heads, bool mask_padding, CounterRng& init_rng);

  /// Full fusion; blocks not needed by a variant can be skipped with
  /// `use_report` / `use_message`.
  FusionOutput fuse(Tape& tape, const EncodedSource& report, const EncodedSource& message,
                    const EncodedSource& added, const EncodedSource& deleted, bool capture,
                    bool use_report = true, bool use_message = true) const;

  const MultiHeadAttention& report_block() const { return report_block_; }
  const MultiHeadAttention& message_block() const { return message_block_; }
  bool mask_padding() const { return mask_padding_; }

 private:
  MultiHeadAttention report_block_;
  MultiHeadAttention message_block_;
  bool mask_padding_ = false;
};

}  // namespace patchfuse
