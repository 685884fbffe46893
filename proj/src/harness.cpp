// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "patchfuse/errors.hpp"
#include "patchfuse/noise.hpp"
#include "patchfuse/optim.hpp"

namespace patchfuse {
namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kDropoutStream = 0x64726f70;  // "drop"

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

}  // namespace

Task parse_task(const std::string& s) {
  if (s == "identification") return Task::identification;
  if (s == "type") return Task::type;
  throw ConfigError("unknown task '" + s + "' (expected identification or type)");
}

const char* task_name(Task t) { return t == Task::identification ? "identification" : "type"; }

std::optional<double> rank_auc(const std::vector<std::size_t>& truth, const std::vector<double>& scores) {
  if (truth.size() != scores.size()) throw ShapeError("AUC needs one score per label");
  const std::size_t n = truth.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] > 1) throw LabelError("AUC labels must be 0 or 1");
    if (truth[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsReport compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                              std::size_t classes, const std::vector<double>* positive_scores) {
  if (truth.empty()) throw DataError("cannot compute metrics over an empty set");
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
  MetricsReport r;
  r.n = truth.size();
  r.classes = classes;
  r.support.assign(classes, 0);
  r.predicted.assign(classes, 0);
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes) throw LabelError("label out of range for metrics");
    ++r.support[truth[i]];
    ++r.predicted[predicted[i]];
    ++r.confusion[truth[i]][predicted[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  const double n = static_cast<double>(r.n);
  r.accuracy = static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < classes; ++c) {
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double p = safe_div(tp, static_cast<double>(r.predicted[c]));
    const double rc = safe_div(tp, static_cast<double>(r.support[c]));
    const double f = safe_div(2.0 * p * rc, p + rc);
    const double w = static_cast<double>(r.support[c]) / n;
    r.precision += w * p;
    r.recall += w * rc;
    r.f1 += w * f;
  }
  if (positive_scores) {
    if (classes != 2) throw ConfigError("AUC is defined for the binary task only");
    r.auc = rank_auc(truth, *positive_scores);
  }
  return r;
}

nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j = {{"task", r.task},           {"variant", r.variant},     {"n", r.n},
                      {"classes", r.classes},     {"accuracy", r.accuracy},   {"precision", r.precision},
                      {"recall", r.recall},       {"f1", r.f1},               {"support", r.support},
                      {"predicted", r.predicted}, {"confusion", r.confusion}};
  j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.task = j.at("task").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.classes = j.at("classes").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.support = j.at("support").get<std::vector<std::size_t>>();
    r.predicted = j.at("predicted").get<std::vector<std::size_t>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("metrics", 0, e.what());
  }
  return r;
}

nlohmann::json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"steps", e.steps},
          {"identification_loss", e.identification_loss},
          {"type_loss", e.type_loss},
          {"total_loss", e.total_loss},
          {"train_accuracy", e.train_accuracy}};
}

BatchLoss batch_loss(const Model& model, Tape& tape, std::span<const Sample> batch, bool train, CounterRng& rng) {
  if (batch.empty()) throw DataError("empty batch");
  const bool with_type = model.config().train_type_head;
  std::vector<Var> id_terms, type_terms;
  BatchLoss out;
  for (const auto& s : batch) {
    const bool typed = with_type && s.flag == 1 && s.cwe_label.has_value();
    const ModelOutput fwd = model.forward(tape, s, train, rng, false, typed);
    id_terms.push_back(model.identification_head().loss(fwd.identification, static_cast<std::size_t>(s.flag)));
    if (fwd.identification.label == static_cast<std::size_t>(s.flag)) ++out.correct;
    if (typed) type_terms.push_back(model.type_head().loss(*fwd.type, static_cast<std::size_t>(*s.cwe_label - 1)));
  }
  out.identification = ops::scale(ops::sum_scalars(id_terms), 1.0 / static_cast<double>(id_terms.size()));
  out.total = out.identification;
  out.type_count = type_terms.size();
  if (!type_terms.empty()) {
    out.type = ops::scale(ops::sum_scalars(type_terms), 1.0 / static_cast<double>(type_terms.size()));
    out.total = ops::add(out.identification, out.type);
  }
  return out;
}

TrainResult train(Model& model, const std::vector<Sample>& samples, const TrainOptions& options) {
  if (samples.empty()) throw DataError("training set is empty");
  const ModelConfig& cfg = model.config();
  const std::size_t epochs = options.epochs.value_or(cfg.epochs);
  AdamW optimizer({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  CounterRng dropout_rng(cfg.seed, kDropoutStream);

  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write training log " + options.log_path.string());
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    // Fisher-Yates from a fresh stream per epoch keeps each epoch independent.
    CounterRng shuffle(cfg.seed, kShuffleStream + epoch);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochLog e;
    e.epoch = epoch;
    std::size_t batches = 0, typed_batches = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) batch.push_back(samples[order[k]]);
      Tape tape;
      model.params().zero_grad();
      const BatchLoss loss = batch_loss(model, tape, batch, true, dropout_rng);
      tape.backward(loss.total);
      optimizer.step(model.params());
      if (cfg.precision == Precision::f32) {
        for (auto& p : model.params()) round_to_f32(p.value);
      }
      e.identification_loss += loss.identification.value().data[0];
      if (loss.type.valid()) {
        e.type_loss += loss.type.value().data[0];
        ++typed_batches;
      }
      e.total_loss += loss.total.value().data[0];
      correct += loss.correct;
      ++batches;
    }
    e.identification_loss /= static_cast<double>(batches);
    e.total_loss /= static_cast<double>(batches);
    if (typed_batches) e.type_loss /= static_cast<double>(typed_batches);
    e.train_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    e.steps = optimizer.steps_taken();
    result.epochs.push_back(e);
    if (log) log << epoch_log_to_json(e).dump() << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(e);
  }
  result.steps = optimizer.steps_taken();
  return result;
}

MetricsReport evaluate(const Model& model, const std::vector<Sample>& samples, Task task) {
  std::vector<std::size_t> truth, pred;
  std::vector<double> scores;
  for (const auto& s : samples) {
    if (task == Task::identification) {
      const ModelOutput out = model.predict(s);
      truth.push_back(static_cast<std::size_t>(s.flag));
      pred.push_back(out.identification.label);
      scores.push_back(out.identification.probs[1]);
    } else {
      if (s.flag != 1 || !s.cwe_label) continue;
      if (!model.config().train_type_head) throw ConfigError("model has no type head");
      const ModelOutput out = model.predict(s);
      truth.push_back(static_cast<std::size_t>(*s.cwe_label - 1));
      pred.push_back(out.type->label);
    }
  }
  if (truth.empty()) throw DataError(std::string("no samples to evaluate for the ") + task_name(task) + " task");
  MetricsReport r = task == Task::identification ? compute_metrics(truth, pred, kIdentificationClasses, &scores)
                                                 : compute_metrics(truth, pred, kTypeClasses);
  r.task = task_name(task);
  r.variant = model.config().variant;
  return r;
}

std::unique_ptr<Model> build_variant(const std::string& tag, ModelConfig base, const std::vector<Sample>& train_set) {
  wiring_for(tag);
  base.variant = tag;
  return Model::create(base, train_set);
}

std::vector<SweepResult> sweep_heads(const ModelConfig& base, const std::vector<Sample>& train_set,
                                     const std::vector<Sample>& test_set, const std::vector<std::size_t>& heads,
                                     Task task) {
  std::vector<SweepResult> out;
  for (std::size_t j : heads) {
    SweepResult r;
    r.heads = j;
    if (j == 0 || base.d % j != 0) {
      r.warning = "skipping J=" + std::to_string(j) + ": does not divide d=" + std::to_string(base.d);
      std::cerr << "warning: " << r.warning << '\n';
      out.push_back(std::move(r));
      continue;
    }
    ModelConfig cfg = base;
    cfg.heads = j;
    auto model = Model::create(cfg, train_set);
    train(*model, train_set);
    r.report = evaluate(*model, test_set, task);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<NoiseResult> noise_run(const Model& model, const std::vector<Sample>& test_set,
                                   const std::vector<double>& ratios, std::uint64_t seed, Task task) {
  std::vector<NoiseResult> out;
  out.push_back({0.0, evaluate(model, test_set, task)});
  for (double ratio : ratios) {
    const auto noisy = inject_noise(test_set, NoiseSpec{ratio, seed});
    out.push_back({ratio, evaluate(model, noisy, task)});
  }
  return out;
}

}  // namespace patchfuse
