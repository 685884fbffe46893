// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the command-line tool in a scratch working directory.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kSmall = " --d 16 --heads 2 --max_length 16 --epochs 2";

struct Workdir {
  fs::path root;
  Workdir() : root(fs::temp_directory_path() / "patchfuse_cli_test") {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(PATCHFUSE_CLI) + " --workdir " + root.string() + " " + args + " >" +
                            (root / "stdout.txt").string() + " 2>" + (root / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const fs::path& rel) const {
    std::ifstream in(root / rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  json read_json(const fs::path& rel) const { return json::parse(read(rel)); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth, train, eval, predict, explain and rerun") {
  Workdir w;
  REQUIRE(w.run("synth --train 16 --test 8") == 0);
  REQUIRE(fs::exists(w.root / "data/synthetic.jsonl"));
  REQUIRE(w.run("train --corpus data/synthetic.jsonl" + kSmall) == 0);
  CHECK(fs::exists(w.root / "models/model.ckpt"));
  CHECK(fs::exists(w.root / "logs/train_log.jsonl"));

  const json manifest = w.read_json("manifests/train.json");
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("config").at("d") == 16);
  CHECK(manifest.at("corpora").contains("data/synthetic.jsonl"));

  REQUIRE(w.run("eval --model models/model.ckpt --corpus data/synthetic.jsonl --task both") == 0);
  const json both = w.read_json("reports/eval-both.json");
  CHECK(both.at("identification").at("task") == "identification");
  CHECK(both.at("identification").at("n") == 8);
  CHECK(both.at("type").at("classes") == 12);

  REQUIRE(w.run("predict --model models/model.ckpt --corpus data/synthetic.jsonl") == 0);
  std::istringstream preds(w.read("reports/predictions.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(preds, line)) {
    const json p = json::parse(line);
    ++n;
    CHECK(p.at("flag_probs").size() == 2);
    CHECK(p.contains("type_pred") == (p.at("flag_pred") == 1));
  }
  CHECK(n == 24);

  std::istringstream corpus(w.read("data/synthetic.jsonl"));
  std::getline(corpus, line);
  const std::string first_id = json::parse(line).at("id");
  REQUIRE(w.run("explain --model models/model.ckpt --corpus data/synthetic.jsonl --id " + first_id +
                " --block message --format json --out reports/hm.json") == 0);
  const json hm = w.read_json("reports/hm.json");
  CHECK(hm.at("head") == "averaged");
  CHECK(hm.at("values").size() == hm.at("query_tokens").size());

  // Replaying the training manifest reproduces the checkpoint byte for byte.
  const std::string before = w.read("models/model.ckpt");
  REQUIRE(w.run("rerun manifests/train.json") == 0);
  CHECK(w.read("models/model.ckpt") == before);
}

TEST_CASE("ablate writes one report per variant tag") {
  Workdir w;
  REQUIRE(w.run("synth --train 16 --test 8") == 0);
  REQUIRE(w.run("ablate --corpus data/synthetic.jsonl --variant att12 --task identification" + kSmall) == 0);
  const json r = w.read_json("reports/ablation/att12-identification.json");
  CHECK(r.at("variant") == "att12");
}

TEST_CASE("exit codes follow the error category") {
  Workdir w;
  REQUIRE(w.run("synth --train 8 --test 4") == 0);
  CHECK(w.run("train --corpus data/synthetic.jsonl --d 10 --heads 4") == 11);
  CHECK(w.run("train --corpus data/synthetic.jsonl --dropout 1.5") == 11);
  CHECK(w.run("train --corpus data/missing.jsonl") == 16);
  CHECK(w.run("train --corpus data/synthetic.jsonl --no_such_flag 1") == 11);
  CHECK(w.run("eval --model data/synthetic.jsonl --corpus data/synthetic.jsonl") != 0);
  {
    std::ofstream bad(w.root / "bad.jsonl");
    bad << "{\"id\": \"x\", \"flag\": \"yes\"}\n";
  }
  CHECK(w.run("train --corpus bad.jsonl") == 14);
}

TEST_CASE("offline harvest from recorded exchanges") {
  Workdir w;
  const fs::path fixtures = fs::path(PATCHFUSE_FIXTURE_DIR) / "harvest";
  // Issue 10 is a 404: a permanent failure is a rejection, not a crash.
  REQUIRE(w.run("harvest --targets " + (fixtures / "targets.jsonl").string() + " --fixtures " + fixtures.string()) ==
          0);
  std::istringstream out(w.read("corpus/harvested.jsonl"));
  std::string line;
  std::size_t kept = 0;
  while (std::getline(out, line)) {
    CHECK(json::parse(line).at("cwe_label") == 9);
    ++kept;
  }
  CHECK(kept == 1);
  std::istringstream rej(w.read("logs/harvest_rejections.jsonl"));
  std::size_t rejected = 0;
  while (std::getline(rej, line)) ++rejected;
  CHECK(rejected == 3);
  CHECK(fs::exists(w.root / "logs/fetch_log.jsonl"));
}

}  // TEST_SUITE
