// SPDX-License-Identifier: Apache-2.0
//
// Training loop, metrics, ablation variants, the head-count sweep and
// noise-robustness runs.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/model.hpp"
#include "patchfuse/sample.hpp"

namespace patchfuse {

enum class Task { identification, type };

Task parse_task(const std::string& s);
const char* task_name(Task t);

struct MetricsReport {
  std::string task;
  std::string variant;
  std::size_t n = 0;
  std::size_t classes = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // binary task with both classes present
  std::vector<std::size_t> support;    // ground-truth count per class
  std::vector<std::size_t> predicted;  // predicted count per class
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
};

/// Weighted P/R/F1 over `classes` labels. A class never predicted has
/// precision 0. `positive_scores`, when given, yields the rank AUC.
MetricsReport compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                              std::size_t classes, const std::vector<double>* positive_scores = nullptr);

/// Mann-Whitney AUC with averaged tie ranks; nullopt unless both classes
/// occur. `truth` holds 0/1.
std::optional<double> rank_auc(const std::vector<std::size_t>& truth, const std::vector<double>& scores);

nlohmann::json metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps so far
  double identification_loss = 0.0;
  double type_loss = 0.0;
  double total_loss = 0.0;
  double train_accuracy = 0.0;  // training-mode predictions seen during the epoch
};

nlohmann::json epoch_log_to_json(const EpochLog& e);

struct TrainOptions {
  std::optional<std::size_t> epochs;  // overrides the config
  std::filesystem::path log_path;     // JSONL, one record per epoch; empty = none
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
};

struct BatchLoss {
  Var total;
  Var identification;
  Var type;  // invalid when no sample in the batch carries a type label
  std::size_t type_count = 0;
  std::size_t correct = 0;
};

/// Mean identification cross-entropy over the batch plus mean type
/// cross-entropy over its labelled positives.
BatchLoss batch_loss(const Model& model, Tape& tape, std::span<const Sample> batch, bool train, CounterRng& rng);

/// Deterministic under config.seed.
TrainResult train(Model& model, const std::vector<Sample>& samples, const TrainOptions& options = {});

/// Identification runs on every sample; type runs on ground-truth positives
/// with a cwe_label.
MetricsReport evaluate(const Model& model, const std::vector<Sample>& samples, Task task);

/// A freshly initialized model wired for `tag`.
std::unique_ptr<Model> build_variant(const std::string& tag, ModelConfig base, const std::vector<Sample>& train);

struct SweepResult {
  std::size_t heads = 0;
  std::optional<MetricsReport> report;  // absent when skipped
  std::string warning;
};

std::vector<SweepResult> sweep_heads(const ModelConfig& base, const std::vector<Sample>& train_set,
                                     const std::vector<Sample>& test_set, const std::vector<std::size_t>& heads,
                                     Task task = Task::identification);

struct NoiseResult {
  double ratio = 0.0;
  MetricsReport report;
};

/// Ratio 0 (clean) followed by every listed ratio.
std::vector<NoiseResult> noise_run(const Model& model, const std::vector<Sample>& test_set,
                                   const std::vector<double>& ratios, std::uint64_t seed, Task task = Task::identification);

}  // namespace patchfuse
