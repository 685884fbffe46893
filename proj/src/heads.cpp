// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/heads.hpp"

#include <algorithm>
#include <cmath>

#include "patchfuse/errors.hpp"

namespace patchfuse {
namespace {

std::size_t rounded_fraction(std::size_t d, std::size_t divisor) {
  const auto v = static_cast<std::size_t>(std::llround(static_cast<double>(d) / static_cast<double>(divisor)));
  return std::max<std::size_t>(1, v);
}

// N(0, 2 / fan_in): keeps activation scale through stacked rectifiers.
Tensor he_normal(Shape shape, std::size_t fan_in, CounterRng& rng) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = sd * rng.normal();
  return t;
}

}  // namespace

FcnSpec FcnSpec::identification(std::size_t d, double dropout, std::size_t input_width) {
  return {{input_width ? input_width : 5 * d, 3 * d, d, rounded_fraction(d, 3), rounded_fraction(d, 12),
           kIdentificationClasses},
          dropout};
}

FcnSpec FcnSpec::type(std::size_t d, double dropout, std::size_t input_width) {
  return {{input_width ? input_width : 5 * d, 3 * d, d, rounded_fraction(d, 3), kTypeClasses}, dropout};
}

void FcnSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("an FCN needs at least an input and an output width");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("FCN layer widths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("FCN dropout must be in [0, 1)");
}

Fcn::Fcn(ParameterStore& store, const std::string& prefix, FcnSpec spec, CounterRng& init_rng)
    : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i + 1 < spec_.widths.size(); ++i) {
    const std::size_t in = spec_.widths[i], out = spec_.widths[i + 1];
    weights_.push_back(&store.add(prefix + ".layer" + std::to_string(i) + ".w", he_normal({in, out}, in, init_rng)));
    biases_.push_back(&store.add(prefix + ".layer" + std::to_string(i) + ".b", Tensor({out})));
  }
}

Var Fcn::forward(Tape& tape, Var input, bool train, CounterRng& rng) const {
  if (input.value().rank() != 1 || input.value().size() != spec_.input_width()) {
    throw ShapeError("FCN expects an input vector of width " + std::to_string(spec_.input_width()) + ", got " +
                     shape_str(input.shape()));
  }
  Var h = ops::reshape(input, {1, spec_.input_width()});
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = ops::add_bias(ops::matmul(h, tape.parameter(*weights_[i])), tape.parameter(*biases_[i]));
    if (i + 1 < weights_.size()) {
      h = ops::relu(h);
      h = ops::dropout(h, spec_.dropout, train, rng);
    }
  }
  return ops::reshape(h, {spec_.classes()});
}

std::size_t argmax_lowest(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction prediction_from_logits(const Tensor& logits, Stage stage) {
  Prediction p;
  p.probs = kernels::softmax(logits).data;
  p.label = argmax_lowest(p.probs);
  p.stage = stage;
  return p;
}

Prediction identify(Tape& tape, Var fused, const Fcn& fcn1) {
  CounterRng unused(0);
  return prediction_from_logits(fcn1.forward(tape, fused, false, unused).value(), Stage::identification);
}

Prediction classify_type(Tape& tape, Var fused, const Fcn& fcn2) {
  CounterRng unused(0);
  return prediction_from_logits(fcn2.forward(tape, fused, false, unused).value(), Stage::type);
}

Var mean_cross_entropy(const std::vector<Var>& logits, const std::vector<std::size_t>& labels) {
  if (logits.empty() || logits.size() != labels.size()) throw ShapeError("mean_cross_entropy needs matching, non-empty batches");
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) terms.push_back(ops::cross_entropy(logits[i], labels[i]));
  return ops::scale(ops::sum_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

namespace {

double mean_nll(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& labels,
                std::size_t classes) {
  if (probs.empty() || probs.size() != labels.size()) throw ShapeError("loss needs matching, non-empty batches");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != classes) throw ShapeError("probability vector has the wrong class count");
    if (labels[i] >= classes) throw LabelError("label " + std::to_string(labels[i]) + " out of range");
    total -= std::log(std::max(probs[i][labels[i]], 1e-300));
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace

double loss_identification(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& z) {
  return mean_nll(probs, z, kIdentificationClasses);
}

double loss_type(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& r) {
  return mean_nll(probs, r, kTypeClasses);
}

std::pair<std::size_t, std::vector<double>> hard_vote(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw ShapeError("hard_vote needs at least one member");
  const std::size_t k = member_probs.front().size();
  std::vector<double> votes(k, 0.0), summed(k, 0.0);
  for (const auto& p : member_probs) {
    if (p.size() != k) throw ShapeError("hard_vote members disagree on class count");
    votes[argmax_lowest(p)] += 1.0;
    for (std::size_t c = 0; c < k; ++c) summed[c] += p[c];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] > summed[best])) best = c;
  }
  for (double& v : votes) v /= static_cast<double>(member_probs.size());
  return {best, votes};
}

std::vector<double> average_vote(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw ShapeError("average_vote needs at least one member");
  std::vector<double> avg(member_probs.front().size(), 0.0);
  for (const auto& p : member_probs) {
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += p[c];
  }
  for (double& v : avg) v /= static_cast<double>(member_probs.size());
  return avg;
}

std::optional<int> TwoStageResult::cwe_label() const {
  if (!type) return std::nullopt;
  return static_cast<int>(type->label) + 1;
}

}  // namespace patchfuse
