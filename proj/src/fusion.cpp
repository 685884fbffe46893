// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/fusion.hpp"

#include <cmath>

#include "patchfuse/errors.hpp"

namespace patchfuse {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, CounterRng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t d,
                                       std::size_t heads, CounterRng& init_rng)
    : d_(d), heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
  }
  wq_ = &store.add(prefix + ".w_q", fan_in_uniform({d, d}, d, init_rng));
  wk_ = &store.add(prefix + ".w_k", fan_in_uniform({d, d}, d, init_rng));
  wv_ = &store.add(prefix + ".w_v", fan_in_uniform({d, d}, d, init_rng));
  wo_ = &store.add(prefix + ".w_o", fan_in_uniform({d, d}, d, init_rng));
}

MultiHeadAttention::Result MultiHeadAttention::forward(Tape& tape, Var query_src, Var kv_src,
                                                       const std::vector<char>* key_valid, bool capture) const {
  if (query_src.value().cols() != d_ || kv_src.value().cols() != d_) {
    throw ShapeError("attention input width must be d=" + std::to_string(d_) + ", got " +
                     shape_str(query_src.shape()) + " and " + shape_str(kv_src.shape()));
  }
  const std::size_t lq = query_src.value().rows();
  const std::size_t lkv = kv_src.value().rows();
  const std::size_t dk = d_ / heads_;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Var q = ops::matmul(query_src, tape.parameter(*wq_));
  Var k = ops::matmul(kv_src, tape.parameter(*wk_));
  Var v = ops::matmul(kv_src, tape.parameter(*wv_));

  Result result;
  if (capture) {
    AttentionMap map;
    map.per_head = Tensor({heads_, lq, lkv});
    map.averaged = Tensor({lq, lkv});
    map.valid_q = lq;
    map.valid_kv = lkv;
    map.kv_segments = {{0, lkv}};
    result.map = std::move(map);
  }

  std::vector<Var> head_outputs;
  head_outputs.reserve(heads_);
  for (std::size_t j = 0; j < heads_; ++j) {
    Var qh = ops::slice_cols(q, j * dk, (j + 1) * dk);
    Var kh = ops::slice_cols(k, j * dk, (j + 1) * dk);
    Var vh = ops::slice_cols(v, j * dk, (j + 1) * dk);
    Var weights = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt_dk), key_valid);
    if (result.map) {
      const auto& w = weights.value().data;
      std::copy(w.begin(), w.end(), result.map->per_head.data.begin() + static_cast<std::ptrdiff_t>(j * lq * lkv));
      for (std::size_t i = 0; i < w.size(); ++i) result.map->averaged.data[i] += w[i] / static_cast<double>(heads_);
    }
    head_outputs.push_back(ops::matmul(weights, vh));
  }
  Var joined = heads_ == 1 ? head_outputs.front() : ops::concat(head_outputs, 1);
  result.output = ops::matmul(joined, tape.parameter(*wo_));
  return result;
}

Var patch_concat(Var added, Var deleted) {
  if (added.value().cols() != deleted.value().cols()) {
    throw ShapeError("patch_concat width mismatch: " + shape_str(added.shape()) + " vs " + shape_str(deleted.shape()));
  }
  return ops::concat({added, deleted}, 0);
}

Var patch_summary(Var added_summary, Var deleted_summary) {
  return ops::scale(ops::add(added_summary, deleted_summary), 0.5);
}

Var pool_and_residual(Var attended, Var residual, std::size_t rows) {
  return ops::add(ops::mean_pool_rows(attended, rows), residual);
}

FusionLayer::FusionLayer(ParameterStore& store, std::size_t d, std::size_t heads, bool mask_padding,
                         CounterRng& init_rng)
    : report_block_(store, "fusion.report_patch", d, heads, init_rng),
      message_block_(store, "fusion.message_patch", d, heads, init_rng),
      mask_padding_(mask_padding) {}

FusionOutput FusionLayer::fuse(Tape& tape, const EncodedSource& report, const EncodedSource& message,
                               const EncodedSource& added, const EncodedSource& deleted, bool capture,
                               bool use_report, bool use_message) const {
  const std::size_t d = report_block_.d();
  for (const EncodedSource* src : {&report, &message, &added, &deleted}) {
    if ((src == &report && !use_report) || (src == &message && !use_message)) continue;
    if (src->hidden.value().cols() != d || src->summary.value().size() != d) {
      throw ShapeError("encoded source width does not match fusion d=" + std::to_string(d));
    }
  }
  FusionOutput out;
  Var patch = patch_concat(added.hidden, deleted.hidden);
  out.patch_summary = patch_summary(added.summary, deleted.summary);

  const std::size_t la = added.hidden.value().rows();
  const std::size_t ld = deleted.hidden.value().rows();
  const std::vector<KeySegment> segments = {{0, added.valid_len}, {la, la + deleted.valid_len}};
  std::vector<char> key_valid;
  if (mask_padding_) {
    key_valid.assign(la + ld, 0);
    for (const auto& seg : segments)
      for (std::size_t j = seg.begin; j < seg.end; ++j) key_valid[j] = 1;
  }
  const std::vector<char>* mask = mask_padding_ ? &key_valid : nullptr;

  auto run_block = [&](const MultiHeadAttention& block, const EncodedSource& query, Var& pooled, Var& residual,
                       std::optional<AttentionMap>& map) {
    auto r = block.forward(tape, query.hidden, patch, mask, capture);
    pooled = ops::mean_pool_rows(r.output, mask_padding_ ? query.valid_len : 0);
    residual = ops::add(pooled, out.patch_summary);
    if (r.map) {
      r.map->valid_q = query.valid_len;
      r.map->valid_kv = added.valid_len + deleted.valid_len;
      r.map->kv_segments = segments;
      map = std::move(r.map);
    }
  };
  if (use_report) run_block(report_block_, report, out.pooled_report, out.report_residual, out.report_map);
  if (use_message) run_block(message_block_, message, out.pooled_message, out.message_residual, out.message_map);
  if (use_report && use_message) {
    out.fused = ops::concat(
        {out.report_residual, out.message_residual, report.summary, message.summary, out.patch_summary}, 0);
  }
  return out;
}

}  // namespace patchfuse
