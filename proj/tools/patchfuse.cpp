// SPDX-License-Identifier: Apache-2.0
//
// patchfuse command-line entry point. Every command resolves its paths under
// --workdir, reads model settings from an optional key-value config file
// (flags win), and finishes by writing a run manifest that `rerun` can replay.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "patchfuse/config.hpp"
#include "patchfuse/diff.hpp"
#include "patchfuse/errors.hpp"
#include "patchfuse/explain.hpp"
#include "patchfuse/harness.hpp"
#include "patchfuse/harvester.hpp"
#include "patchfuse/model.hpp"
#include "patchfuse/noise.hpp"
#include "patchfuse/sample.hpp"
#include "patchfuse/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace patchfuse;

namespace {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << body;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_atomically(path, j.dump(2) + "\n"); }

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string body;
  for (const auto& r : rows) body += r.dump() + "\n";
  write_atomically(path, body);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

// Writes the textual flag value into the slot, keeping the slot's JSON type.
void apply_override(json& config, const std::string& key, const std::string& v) {
  json& slot = config[key];
  try {
    std::size_t used = 0;
    if (slot.is_boolean()) {
      slot = parse_bool(key, v);
    } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
      if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
      slot = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing characters");
    } else if (slot.is_number_float()) {
      slot = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing characters");
    } else {
      slot = v;
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": cannot parse '" + v + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError(key + ": value '" + v + "' is out of range");
  }
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return out;
}

struct Settings {
  std::vector<double> noise_ratios{kNoiseRatios.begin(), kNoiseRatios.end()};
  std::uint64_t noise_seed = 42;
  int test_year = kTestYear;
};

json settings_to_json(const Settings& s) {
  return {{"noise_ratios", s.noise_ratios}, {"noise_seed", s.noise_seed}, {"test_year", s.test_year}};
}

Settings settings_from_json(const json& j) {
  Settings s;
  s.noise_ratios = j.value("noise_ratios", s.noise_ratios);
  s.noise_seed = j.value("noise_seed", s.noise_seed);
  s.test_year = j.value("test_year", s.test_year);
  return s;
}

// Bookkeeping for the run manifest.
class Run {
 public:
  Run(fs::path workdir, std::string command, std::vector<std::string> argv)
      : workdir_(fs::absolute(std::move(workdir))), command_(std::move(command)), argv_(std::move(argv)),
        start_(std::chrono::steady_clock::now()), started_at_(utc_now()) {}

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : workdir_ / path;
  }

  std::vector<Sample> read_corpus_file(const std::string& p) {
    const fs::path path = resolve(p);
    auto samples = read_corpus(path);
    corpora_[p] = sha256_file(path);
    return samples;
  }

  void input(const std::string& p) { inputs_[p] = sha256_file(resolve(p)); }
  void artifact(const std::string& p) { artifacts_.push_back(p); }

  void write_manifest(const fs::path& path, const ModelConfig& config, const Settings& settings,
                      const json& extra) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"format", "patchfuse-run-manifest"},
              {"version", 1},
              {"command", command_},
              {"argv", argv_},
              {"workdir", workdir_.string()},
              {"config", config_to_json(config)},
              {"settings", settings_to_json(settings)},
              {"seed", config.seed},
              {"corpora", corpora_},
              {"inputs", inputs_},
              {"artifacts", artifacts_},
              {"started_at", started_at_},
              {"wall_clock_s", wall}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_json(path, m);
  }

  const fs::path& workdir() const { return workdir_; }

 private:
  fs::path workdir_;
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
  json corpora_ = json::object();
  json inputs_ = json::object();
  std::vector<std::string> artifacts_;
};

std::vector<Sample> pick_split(const std::vector<Sample>& samples, int test_year, bool all_years, bool test) {
  if (all_years) return samples;
  YearSplit split = split_by_year(samples, test_year);
  for (const auto& r : split.rejected) std::cerr << "skipped " << r.id << ": " << r.reason << '\n';
  auto& part = test ? split.test : split.train;
  if (part.empty()) {
    throw DataError(std::string("the ") + (test ? "test" : "training") + " split is empty (test year " +
                    std::to_string(test_year) + "); pass --all_years to use every record");
  }
  return std::move(part);
}

std::vector<Task> tasks_for(const std::string& s, const ModelConfig& config) {
  if (s == "both") {
    if (!config.train_type_head) return {Task::identification};
    return {Task::identification, Task::type};
  }
  return {parse_task(s)};
}

void print_report(const MetricsReport& r) {
  std::printf("%-16s %-14s n=%-4zu acc=%.4f P=%.4f R=%.4f F1=%.4f", r.variant.c_str(), r.task.c_str(), r.n,
              r.accuracy, r.precision, r.recall, r.f1);
  if (r.auc) std::printf(" AUC=%.4f", *r.auc);
  std::printf("\n");
}

std::vector<std::string> strip_config_flag(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      ++i;
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

struct Replay {
  json config;
  json settings;
  fs::path workdir;
};

int run(const std::vector<std::string>& args, const Replay* replay);

int dispatch(const std::vector<std::string>& args, const Replay* replay) {
  try {
    return run(args, replay);
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::io);
  } catch (const json::exception& e) {
    std::cerr << "error [schema]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::schema);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(const std::vector<std::string>& args, const Replay* replay) {
  CLI::App app{"patchfuse: multi-source fusion of reports, messages and patches for vulnerability-fix "
               "identification and CWE typing"};
  app.name("patchfuse");
  app.set_config("--config", "", "Key-value config file (TOML or INI); flags override its values");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);

  std::string workdir = ".";
  std::string preset = "desk";
  std::string manifest_path;
  app.add_option("--workdir", workdir, "Root for every relative path")->capture_default_str();
  app.add_option("--preset", preset, "Base hyperparameters before the config file: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  app.add_option("--manifest", manifest_path, "Run manifest path (default manifests/<command>.json)");

  std::map<std::string, std::pair<CLI::Option*, std::string>> overrides;
  const json desk = config_to_json(ModelConfig::desk());
  for (const auto& [key, value] : desk.items()) {
    auto& slot = overrides[key];
    slot.first = app.add_option("--" + key, slot.second, "ModelConfig." + key + " (desk: " + value.dump() + ")")
                     ->group("Model config");
  }
  Settings settings;
  std::vector<double> noise_ratios;
  std::uint64_t noise_seed = 0;
  int test_year = 0;
  auto* opt_ratios =
      app.add_option("--noise_ratios", noise_ratios, "Noise ratios for noise-eval")->delimiter(',')->group("Data");
  auto* opt_nseed = app.add_option("--noise_seed", noise_seed, "Noise-injection seed")->group("Data");
  auto* opt_year = app.add_option("--test_year", test_year, "Records of this year form the test split")->group("Data");

  // synth
  auto* synth = app.add_subcommand("synth", "Write the bundled synthetic corpus");
  std::string synth_out = "data/synthetic.jsonl";
  SynthSpec synth_spec;
  synth->add_option("--out", synth_out)->capture_default_str();
  synth->add_option("--train", synth_spec.train, "Training records")->capture_default_str();
  synth->add_option("--test", synth_spec.test, "Test records")->capture_default_str();
  synth->add_option("--corpus_seed", synth_spec.seed)->capture_default_str();

  // harvest
  auto* harvest = app.add_subcommand("harvest", "Build corpus records from issues and their linked commits");
  std::string targets, harvest_out = "corpus/harvested.jsonl", fixtures, api_root = kDefaultApiRoot;
  std::string fetch_log = "logs/fetch_log.jsonl", harvest_rej = "logs/harvest_rejections.jsonl";
  harvest->add_option("--targets", targets, "JSONL of {owner, repo, issue, flag, cve_id?, cwe_id?}")->required();
  harvest->add_option("--out", harvest_out)->capture_default_str();
  harvest->add_option("--fixtures", fixtures, "Replay recorded exchanges from this directory instead of the network");
  harvest->add_option("--api_root", api_root)->capture_default_str();
  harvest->add_option("--fetch_log", fetch_log)->capture_default_str();
  harvest->add_option("--rejections", harvest_rej)->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate raw records (optionally with a unified diff) into a corpus");
  std::string ingest_in, ingest_out = "corpus/corpus.jsonl", ingest_rej = "logs/ingest_rejections.jsonl";
  ingest->add_option("--in", ingest_in)->required();
  ingest->add_option("--out", ingest_out)->capture_default_str();
  ingest->add_option("--rejections", ingest_rej)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on the training split");
  std::string corpus, model_out = "models/model.ckpt", train_log = "logs/train_log.jsonl";
  bool all_years = false;
  train_cmd->add_option("--corpus", corpus)->required();
  train_cmd->add_option("--out", model_out)->capture_default_str();
  train_cmd->add_option("--log", train_log)->capture_default_str();
  train_cmd->add_flag("--all_years", all_years, "Train on every record instead of the pre-test years");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string model_path, task_name_s = "both", out_path;
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--corpus", corpus)->required();
  eval_cmd->add_option("--task", task_name_s, "identification, type or both")->capture_default_str();
  eval_cmd->add_option("--out", out_path, "Report path (default reports/eval-<task>.json)");
  eval_cmd->add_flag("--all_years", all_years);

  // predict
  auto* predict = app.add_subcommand("predict", "Two-stage predictions for every record");
  predict->add_option("--model", model_path)->required();
  predict->add_option("--corpus", corpus)->required();
  predict->add_option("--out", out_path, "JSONL (default reports/predictions.jsonl)");

  // explain
  auto* explain = app.add_subcommand("explain", "Export a cropped, normalized fusion-attention heatmap");
  std::string sample_id, block = "report", head = "averaged", format = "csv";
  explain->add_option("--model", model_path)->required();
  explain->add_option("--corpus", corpus)->required();
  explain->add_option("--id", sample_id)->required();
  explain->add_option("--block", block, "report (block 1) or message (block 2)")
      ->check(CLI::IsMember({"report", "message"}))
      ->capture_default_str();
  explain->add_option("--head", head, "Head index or 'averaged'")->capture_default_str();
  explain->add_option("--format", format, "csv, json or pgm")->capture_default_str();
  explain->add_option("--out", out_path, "Default reports/heatmap-<id>-<block>.<format>");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the configured variant (--variant all for every one)");
  std::string out_dir = "reports/ablation";
  ablate->add_option("--corpus", corpus)->required();
  ablate->add_option("--task", task_name_s)->capture_default_str();
  ablate->add_option("--out_dir", out_dir)->capture_default_str();

  // sweep-heads
  auto* sweep = app.add_subcommand("sweep-heads", "Train one model per head count");
  std::vector<std::size_t> head_counts = {1, 2, 4, 8};
  sweep->add_option("--corpus", corpus)->required();
  sweep->add_option("--heads_list", head_counts, "Comma-separated head counts")->delimiter(',')->capture_default_str();
  sweep->add_option("--task", task_name_s)->capture_default_str();
  sweep->add_option("--out", out_path, "Default reports/sweep-heads.json");

  // noise-eval
  auto* noise = app.add_subcommand("noise-eval", "Evaluate a checkpoint on noise-injected copies of the test split");
  noise->add_option("--model", model_path)->required();
  noise->add_option("--corpus", corpus)->required();
  noise->add_option("--task", task_name_s)->capture_default_str();
  noise->add_option("--out", out_path, "Default reports/noise.json");
  noise->add_flag("--all_years", all_years);

  // rerun
  auto* rerun = app.add_subcommand("rerun", "Replay a run from its manifest");
  std::string rerun_manifest;
  rerun->add_option("manifest", rerun_manifest)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCategory::config);
  }

  if (rerun->parsed()) {
    if (replay) throw ConfigError("a replayed run cannot itself be a rerun");
    const fs::path manifest_path = fs::path(workdir) / rerun_manifest;
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot read manifest " + manifest_path.string());
    json m;
    try {
      m = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("manifest: ") + e.what(), 0);
    }
    if (m.value("format", "") != "patchfuse-run-manifest") throw SchemaError("format", 0, "not a run manifest");
    Replay r{m.at("config"), m.at("settings"), m.at("workdir").get<std::string>()};
    return run(strip_config_flag(m.at("argv").get<std::vector<std::string>>()), &r);
  }

  // Resolve configuration: preset (or the replayed config), then the config
  // file and flags, which CLI11 has already merged.
  json cj = replay ? replay->config : config_to_json(preset == "paper" ? ModelConfig::paper() : ModelConfig::desk());
  for (const auto& [key, slot] : overrides)
    if (slot.first->count() > 0) apply_override(cj, key, slot.second);
  ModelConfig config = config_from_json(cj);
  if (replay) settings = settings_from_json(replay->settings);
  if (opt_ratios->count() > 0) settings.noise_ratios = noise_ratios;
  if (opt_nseed->count() > 0) settings.noise_seed = noise_seed;
  if (opt_year->count() > 0) settings.test_year = test_year;
  for (double r : settings.noise_ratios) NoiseSpec{r, settings.noise_seed}.validate();

  const bool ablate_all = ablate->parsed() && config.variant == "all";
  if (ablate_all) {
    for (const auto& tag : variant_tags()) {
      ModelConfig c = config;
      c.variant = tag;
      c.validate();
    }
  } else {
    config.validate();
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  Run run_info(replay ? replay->workdir : fs::path(workdir), command, args);
  json extra = json::object();

  if (synth->parsed()) {
    const auto samples = synthetic_corpus(synth_spec);
    write_corpus(run_info.resolve(synth_out), samples);
    run_info.artifact(synth_out);
    extra["synth"] = {{"train", synth_spec.train}, {"test", synth_spec.test}, {"corpus_seed", synth_spec.seed}};
    std::printf("wrote %zu records to %s\n", samples.size(), run_info.resolve(synth_out).c_str());
  } else if (harvest->parsed()) {
    run_info.input(targets);
    const auto list = read_harvest_targets(run_info.resolve(targets));
    std::unique_ptr<HttpTransport> transport;
    if (fixtures.empty()) {
      transport = std::make_unique<LiveTransport>();
    } else {
      transport = std::make_unique<FixtureTransport>(run_info.resolve(fixtures));
    }
    FetchClient client(*transport, FetchClient::token_from_env());
    Harvester harvester(client, api_root);
    std::vector<Sample> built;
    std::vector<json> rejections;
    std::size_t transient = 0;
    for (const auto& t : list) {
      const std::string id = t.owner + "/" + t.repo + "#" + std::to_string(t.issue);
      try {
        auto result = harvester.harvest(t.owner, t.repo, t.issue, t.label);
        if (result.sample) {
          built.push_back(std::move(*result.sample));
        } else {
          rejections.push_back({{"id", id}, {"reason", result.rejection}});
        }
      } catch (const NetworkError& e) {
        if (e.category() == ErrorCategory::transient_network) ++transient;
        json rej = {{"id", id}, {"reason", e.what()}, {"status", e.status()}};
        if (e.retry_after_s() >= 0) rej["retry_after_s"] = e.retry_after_s();
        rejections.push_back(std::move(rej));
      }
    }
    write_corpus(run_info.resolve(harvest_out), built);
    client.write_log(run_info.resolve(fetch_log));
    write_jsonl(run_info.resolve(harvest_rej), rejections);
    for (const auto& p : {harvest_out, fetch_log, harvest_rej}) run_info.artifact(p);
    extra["harvest"] = {{"built", built.size()}, {"rejected", rejections.size()}, {"api_root", api_root}};
    std::printf("harvested %zu records, rejected %zu\n", built.size(), rejections.size());
    if (transient > 0) {
      run_info.write_manifest(manifest_path.empty() ? run_info.resolve("manifests/harvest.json")
                                                    : run_info.resolve(manifest_path),
                              config, settings, extra);
      std::cerr << "error [transient_network]: " << transient << " target(s) hit transient failures; re-run later\n";
      return static_cast<int>(ErrorCategory::transient_network);
    }
  } else if (ingest->parsed()) {
    run_info.input(ingest_in);
    std::ifstream in(run_info.resolve(ingest_in));
    if (!in) throw IoError("cannot read " + ingest_in);
    std::vector<Sample> kept;
    std::vector<json> rejections;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::string id = "line " + std::to_string(n);
      try {
        json j = json::parse(line);
        if (j.contains("id") && j.at("id").is_string()) id = j.at("id").get<std::string>();
        if (j.contains("diff")) {
          std::vector<FileDiff> code;
          for (auto& f : parse_diff_files(j.at("diff").get<std::string>()))
            if (is_code_file(f.path())) code.push_back(std::move(f));
          const PatchText patch = merge_files(code);
          if (patch.added.empty() && patch.deleted.empty())
            throw DataError("no changed lines in .c/.cc/.java/.py files");
          j["patch_add"] = patch.added;
          j["patch_del"] = patch.deleted;
          j.erase("diff");
        }
        Sample s = sample_from_json(j, n);
        if (!s.year && s.cve_id) s.year = year_from_cve(*s.cve_id);
        kept.push_back(std::move(s));
      } catch (const json::exception& e) {
        rejections.push_back({{"id", id}, {"line", n}, {"reason", e.what()}});
      } catch (const Error& e) {
        rejections.push_back({{"id", id}, {"line", n}, {"reason", e.what()}});
      }
    }
    write_corpus(run_info.resolve(ingest_out), kept);
    write_jsonl(run_info.resolve(ingest_rej), rejections);
    run_info.artifact(ingest_out);
    run_info.artifact(ingest_rej);
    const YearSplit split = split_by_year(kept, settings.test_year);
    extra["ingest"] = {{"kept", kept.size()},
                       {"rejected", rejections.size()},
                       {"train", split.train.size()},
                       {"test", split.test.size()},
                       {"no_year", split.rejected.size()}};
    std::printf("kept %zu (train %zu, test %zu, no year %zu), rejected %zu\n", kept.size(), split.train.size(),
                split.test.size(), split.rejected.size(), rejections.size());
  } else if (train_cmd->parsed()) {
    const auto samples = pick_split(run_info.read_corpus_file(corpus), settings.test_year, all_years, false);
    auto model = Model::create(config, samples);
    TrainOptions opts;
    const fs::path log_path = run_info.resolve(train_log);
    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    opts.log_path = log_path;
    opts.on_epoch = [](const EpochLog& e) {
      std::fprintf(stderr, "epoch %3zu  loss %.6f  (id %.6f, type %.6f)  train acc %.4f\n", e.epoch, e.total_loss,
                   e.identification_loss, e.type_loss, e.train_accuracy);
    };
    const TrainResult result = train(*model, samples, opts);
    const fs::path ckpt = run_info.resolve(model_out);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    model->save(ckpt);
    run_info.artifact(model_out);
    run_info.artifact(train_log);
    extra["train"] = {{"samples", samples.size()}, {"steps", result.steps}, {"checkpoint_sha256", sha256_file(ckpt)}};
    std::printf("trained %zu steps on %zu records; checkpoint %s\n", result.steps, samples.size(), ckpt.c_str());
  } else if (eval_cmd->parsed() || noise->parsed()) {
    run_info.input(model_path);
    const auto model = Model::load(run_info.resolve(model_path));
    config = model->config();
    const auto samples = pick_split(run_info.read_corpus_file(corpus), settings.test_year, all_years, true);
    json out = json::object();
    for (Task task : tasks_for(task_name_s, config)) {
      if (eval_cmd->parsed()) {
        const MetricsReport r = evaluate(*model, samples, task);
        print_report(r);
        out[task_name(task)] = metrics_to_json(r);
      } else {
        json rows = json::array();
        for (const auto& nr : noise_run(*model, samples, settings.noise_ratios, settings.noise_seed, task)) {
          std::printf("ratio %.2f  ", nr.ratio);
          print_report(nr.report);
          rows.push_back({{"ratio", nr.ratio}, {"report", metrics_to_json(nr.report)}});
        }
        out[task_name(task)] = rows;
      }
    }
    if (out_path.empty()) {
      out_path = eval_cmd->parsed() ? "reports/eval-" + task_name_s + ".json" : "reports/noise.json";
    }
    write_json(run_info.resolve(out_path), out);
    run_info.artifact(out_path);
  } else if (predict->parsed()) {
    run_info.input(model_path);
    const auto model = Model::load(run_info.resolve(model_path));
    config = model->config();
    const auto samples = run_info.read_corpus_file(corpus);
    std::vector<json> rows;
    for (const auto& s : samples) {
      const TwoStageResult r = model->two_stage_predict(s);
      json row = {{"id", s.id}, {"flag_pred", r.flag.label}, {"flag_probs", r.flag.probs}};
      if (r.type) {
        row["type_pred"] = *r.cwe_label();
        row["type_probs"] = r.type->probs;
      }
      rows.push_back(std::move(row));
    }
    if (out_path.empty()) out_path = "reports/predictions.jsonl";
    write_jsonl(run_info.resolve(out_path), rows);
    run_info.artifact(out_path);
    std::printf("wrote %zu predictions to %s\n", rows.size(), run_info.resolve(out_path).c_str());
  } else if (explain->parsed()) {
    run_info.input(model_path);
    const auto model = Model::load(run_info.resolve(model_path));
    config = model->config();
    const auto samples = run_info.read_corpus_file(corpus);
    auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.id == sample_id; });
    if (it == samples.end()) throw LookupError("no record with id '" + sample_id + "'");
    const HeatmapFormat fmt = parse_heatmap_format(format);
    std::optional<std::size_t> head_index;
    if (head != "averaged") {
      try {
        std::size_t used = 0;
        head_index = std::stoul(head, &used);
        if (used != head.size()) throw std::invalid_argument(head);
      } catch (const std::exception&) {
        throw ConfigError("--head must be a head index or 'averaged', got '" + head + "'");
      }
    }
    const ModelOutput out = model->predict(*it, true);
    const auto& map = block == "report" ? out.report_map : out.message_map;
    if (!map) throw ConfigError("variant '" + config.variant + "' has no " + block + " fusion block");
    Heatmap hm = extract_heatmap_segments(*map, map->valid_q, head_index);
    const SourceField qfield = block == "report" ? SourceField::description : SourceField::message;
    auto q = model->encoder_for(qfield).surface_tokens(*it, qfield);
    q.resize(map->valid_q);
    hm.query_tokens = std::move(q);
    auto added = model->encoder_for(SourceField::patch_add).surface_tokens(*it, SourceField::patch_add);
    auto deleted = model->encoder_for(SourceField::patch_del).surface_tokens(*it, SourceField::patch_del);
    const auto& seg = map->kv_segments;
    added.resize(seg.at(0).end - seg.at(0).begin);
    deleted.resize(seg.at(1).end - seg.at(1).begin);
    for (auto& t : added) hm.key_tokens.push_back("+" + t);
    for (auto& t : deleted) hm.key_tokens.push_back("-" + t);
    if (out_path.empty()) out_path = "reports/heatmap-" + sanitize(sample_id) + "-" + block + "." + format;
    const fs::path dest = run_info.resolve(out_path);
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    export_heatmap(hm, dest, fmt);
    run_info.artifact(out_path);
    std::printf("wrote %zux%zu heatmap to %s\n", hm.values.rows(), hm.values.cols(), dest.c_str());
  } else if (ablate->parsed()) {
    const auto all = run_info.read_corpus_file(corpus);
    const auto train_set = pick_split(all, settings.test_year, false, false);
    const auto test_set = pick_split(all, settings.test_year, false, true);
    const std::vector<std::string> tags = ablate_all ? variant_tags() : std::vector<std::string>{config.variant};
    for (const auto& tag : tags) {
      auto model = build_variant(tag, config, train_set);
      train(*model, train_set);
      for (Task task : tasks_for(task_name_s, model->config())) {
        const MetricsReport r = evaluate(*model, test_set, task);
        print_report(r);
        const std::string path = out_dir + "/" + sanitize(tag) + "-" + task_name(task) + ".json";
        write_json(run_info.resolve(path), metrics_to_json(r));
        run_info.artifact(path);
      }
    }
  } else if (sweep->parsed()) {
    const auto all = run_info.read_corpus_file(corpus);
    const auto train_set = pick_split(all, settings.test_year, false, false);
    const auto test_set = pick_split(all, settings.test_year, false, true);
    json rows = json::array();
    for (Task task : tasks_for(task_name_s, config)) {
      for (const auto& r : sweep_heads(config, train_set, test_set, head_counts, task)) {
        json row = {{"heads", r.heads}, {"task", task_name(task)}};
        if (r.report) {
          std::printf("J=%-3zu ", r.heads);
          print_report(*r.report);
          row["report"] = metrics_to_json(*r.report);
        } else {
          row["warning"] = r.warning;
        }
        rows.push_back(std::move(row));
      }
    }
    if (out_path.empty()) out_path = "reports/sweep-heads.json";
    write_json(run_info.resolve(out_path), rows);
    run_info.artifact(out_path);
  }

  run_info.write_manifest(manifest_path.empty() ? run_info.resolve("manifests/" + command + ".json")
                                                : run_info.resolve(manifest_path),
                          config, settings, extra);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, nullptr);
}
