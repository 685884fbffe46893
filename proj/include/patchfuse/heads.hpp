// SPDX-License-Identifier: Apache-2.0
//
// Classification heads: a rectified fully connected stack for the binary
// vulnerability decision and another for the twelve merged CWE labels.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchfuse/autodiff.hpp"

namespace patchfuse {

inline constexpr std::size_t kIdentificationClasses = 2;
inline constexpr std::size_t kTypeClasses = 12;

struct FcnSpec {
  std::vector<std::size_t> widths;  // input width first, class count last
  double dropout = 0.3;

  /// [5d, 3d, d, d/3, d/12, 2] with rounding (minimum 1); the first width
  /// can be overridden for variants that feed a narrower vector.
  static FcnSpec identification(std::size_t d, double dropout, std::size_t input_width = 0);
  /// [5d, 3d, d, d/3, 12]
  static FcnSpec type(std::size_t d, double dropout, std::size_t input_width = 0);

  std::size_t input_width() const { return widths.front(); }
  std::size_t classes() const { return widths.back(); }
  void validate() const;
};

class Fcn {
 public:
  Fcn() = default;
  Fcn(ParameterStore& store, const std::string& prefix, FcnSpec spec, CounterRng& init_rng);

  /// Logits; ReLU and dropout after every layer except the last.
  Var forward(Tape& tape, Var input, bool train, CounterRng& rng) const;

  const FcnSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return weights_.size(); }
  Parameter& weight(std::size_t i) const { return *weights_[i]; }
  Parameter& bias(std::size_t i) const { return *biases_[i]; }

 private:
  FcnSpec spec_;
  std::vector<Parameter*> weights_;  // [in x out]
  std::vector<Parameter*> biases_;
};

enum class Stage { identification, type };

struct Prediction {
  std::vector<double> probs;
  std::size_t label = 0;  // class index, lowest index wins ties
  Stage stage = Stage::identification;
};

std::size_t argmax_lowest(const std::vector<double>& values);
Prediction prediction_from_logits(const Tensor& logits, Stage stage);

/// Eval-mode head application (no dropout).
Prediction identify(Tape& tape, Var fused, const Fcn& fcn1);
Prediction classify_type(Tape& tape, Var fused, const Fcn& fcn2);

/// Mean softmax cross-entropy of per-sample logits.
Var mean_cross_entropy(const std::vector<Var>& logits, const std::vector<std::size_t>& labels);
/// Same quantity from probabilities: -mean(log p[label]).
double loss_identification(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& z);
double loss_type(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& r);

/// Majority label over member argmaxes; ties go to the highest summed
/// probability, then the lowest label. Returns the label and the per-class
/// vote share.
std::pair<std::size_t, std::vector<double>> hard_vote(const std::vector<std::vector<double>>& member_probs);
std::vector<double> average_vote(const std::vector<std::vector<double>>& member_probs);

struct TwoStageResult {
  Prediction flag;
  std::optional<Prediction> type;  // present iff flag.label == 1

  /// Merged CWE label 1..12 of the type prediction.
  std::optional<int> cwe_label() const;
};

}  // namespace patchfuse
