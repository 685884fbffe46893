// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a per-pass tape. A Tape records every op
// executed during one forward pass; backward() replays them in strict reverse
// order and then flushes each parameter's accumulated gradient exactly once.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "patchfuse/tensor.hpp"

namespace patchfuse {

/// A named trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {
    value.requires_grad = true;
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Insertion-ordered registry with stable addresses.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Records the parameter once per tape; repeated calls return the same node.
  Var parameter(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss, replays the tape in
  /// reverse, then adds each parameter leaf's gradient into Parameter::grad.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Used by op implementations.
  Var record(Tensor value, std::vector<std::size_t> inputs, std::function<void(Tape&, std::size_t)> backprop);
  Tensor& grad_mut(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, std::size_t)> backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

namespace ops {

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// x[m×n] + b[n] broadcast over rows, or x[n] + b[n].
Var add_bias(Var x, Var b);
Var scale(Var x, double c);
Var relu(Var x);
/// Inverted dropout: identity when !train or p == 0.
Var dropout(Var x, double p, bool train, CounterRng& rng);
/// Row-wise softmax with max subtraction. When `key_valid` is given, columns
/// with key_valid[j] == 0 receive zero weight.
Var softmax_rows(Var x, const std::vector<char>* key_valid = nullptr);
/// Softmax of a vector.
Var softmax(Var x);
/// Column-wise mean over the first `rows` rows (all rows when 0): [m×n] → [n].
Var mean_pool_rows(Var x, std::size_t rows = 0);
/// axis 0: stack matrices by rows or join vectors; axis 1: join matrices by columns.
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var row(Var x, std::size_t i);
Var reshape(Var x, Shape shape);
Var embedding(Var table, const std::vector<std::size_t>& ids);
/// Softmax cross-entropy of logits[K] against `label`; returns shape [1].
Var cross_entropy(Var logits, std::size_t label);
/// Sum of single-element values; returns shape [1].
Var sum_scalars(const std::vector<Var>& xs);
/// Sum of all elements; returns shape [1].
Var sum_all(Var x);
/// Same value, no gradient flow to the input.
Var detach(Var x);

}  // namespace ops

/// Plain forward kernels, also used outside the tape.
namespace kernels {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, const std::vector<char>* key_valid = nullptr);
Tensor softmax(const Tensor& x);
}  // namespace kernels

}  // namespace patchfuse
