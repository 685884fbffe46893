// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "patchfuse/errors.hpp"
#include "patchfuse/harvester.hpp"

using namespace patchfuse;
using namespace std::chrono_literals;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(PATCHFUSE_FIXTURE_DIR) / "harvest";
const std::string kShaA = "a1b2c3d4e5f60718293a4b5c6d7e8f9012345678";
const std::string kShaB = "0123456789abcdef0123456789abcdef01234567";

// Fixture replay with the clock frozen at t=1000 and sleeps recorded only.
struct Offline {
  FixtureTransport transport{kFixtures};
  FetchClient client{transport, std::nullopt, FetchPolicy{}, [](std::chrono::milliseconds) {}, [] {
                       return std::int64_t{1000};
                     }};
};

class Recorder : public HttpTransport {
 public:
  HttpResponse get(const std::string& url, const std::map<std::string, std::string>& headers) override {
    urls.push_back(url);
    last_headers = headers;
    return {200, {}, "{}"};
  }
  std::vector<std::string> urls;
  std::map<std::string, std::string> last_headers;
};

}  // namespace

TEST_SUITE("harvester") {

TEST_CASE("commit links: body first, comments by time, duplicates dropped") {
  IssueRef issue{"octo", "widget", 7, "t", "fixed in https://github.com/octo/widget/commit/" + kShaA, {}, 2018};
  issue.comments = {{"also " + kShaB, "2018-06-09T00:00:00Z"},
                    {"see https://github.com/octo/widget/pull/12/commits/" + std::string("A1B2C3D4E5F60718293A4B5C6D7E8F9012345678"),
                     "2018-06-03T00:00:00Z"},
                    {"upstream https://api.github.com/repos/other/lib/commits/" + kShaB, "2018-06-10T00:00:00Z"}};
  const auto links = link_commits(issue);
  REQUIRE(links.size() == 3);
  CHECK(links[0].sha == kShaA);
  CHECK(links[0].owner == "octo");
  CHECK(links[1].sha == kShaB);
  CHECK(links[1].repo == "widget");
  CHECK(links[2].owner == "other");
  CHECK(links[2].repo == "lib");
  CHECK(link_commits(IssueRef{"o", "r", 1, "t", "short abc123 and 41 hex " + kShaA + "0", {}, {}}).empty());
}

TEST_CASE("code file filter") {
  for (const char* p : {"a.c", "src/B.CC", "x/Y.java", "z.py"}) CHECK(is_code_file(p));
  for (const char* p : {"README.md", "a.h", "a.cpp", "a.pyc", "Makefile", "c"}) CHECK_FALSE(is_code_file(p));
  CHECK(is_commit_sha(kShaA));
  CHECK_FALSE(is_commit_sha("xyz"));
}

TEST_CASE("harvesting the fixture issue merges code hunks from both commits") {
  Offline off;
  Harvester h(off.client);
  const BuildResult r = h.harvest("octo", "widget", 7, {1, "CVE-2018-12345", "CWE-125"});
  REQUIRE(r.sample.has_value());
  const Sample& s = *r.sample;
  CHECK(s.patch_add == "  if (len > sizeof out) return -1;\n  memcpy(out, buf, len);\nassert len(sys.argv[1]) <= 4096");
  CHECK(s.patch_del == "  memcpy(out, buf, len);");
  CHECK(s.commit_message == "Bound header length before copying\nAdd header length checker");
  CHECK(s.flag == 1);
  CHECK(s.cwe_label == 9);
  CHECK(s.year == 2018);
  CHECK(s.description.find('\n') != std::string::npos);
  CHECK(off.transport.misses().empty());
  CHECK(off.client.log().size() == 6);
}

TEST_CASE("rejections: docs-only changes, no links, missing issue") {
  Offline off;
  Harvester h(off.client);
  const BuildResult docs = h.harvest("octo", "widget", 8, {0, {}, {}});
  CHECK_FALSE(docs.sample.has_value());
  CHECK(docs.rejection.find("no changed lines") != std::string::npos);
  const BuildResult none = h.harvest("octo", "widget", 9, {0, {}, {}});
  CHECK(none.rejection == "no linked commits");
  CHECK_THROWS_AS(h.harvest("octo", "widget", 10, {0, {}, {}}), PermanentNetworkError);
}

TEST_CASE("rate limit waits until the reset time") {
  Offline off;
  CHECK(off.client.fetch("https://api.github.com/test/ratelimit") == "\"ok\"");
  REQUIRE(off.client.sleeps().size() == 1);
  CHECK(off.client.sleeps()[0] == 11s);  // reset 1010 - now 1000 + 1
  CHECK(off.client.log().size() == 2);
  CHECK(off.client.log()[0].status == 403);
  CHECK(off.client.log()[1].attempt == 2);
}

TEST_CASE("retry-after is honoured") {
  Offline off;
  CHECK(off.client.fetch("https://api.github.com/test/retry-after") == "\"ok\"");
  REQUIRE(off.client.sleeps().size() == 1);
  CHECK(off.client.sleeps()[0] == 7s);
}

TEST_CASE("server errors back off exponentially") {
  Offline off;
  CHECK(off.client.fetch("https://api.github.com/test/flaky") == "\"ok\"");
  CHECK(off.client.sleeps() == std::vector<std::chrono::milliseconds>{500ms, 1000ms});

  Offline down;
  try {
    down.client.fetch("https://api.github.com/test/down");
    FAIL("expected a transient error");
  } catch (const TransientNetworkError& e) {
    CHECK(e.status() == 500);
  }
  CHECK(down.client.log().size() == 4);
  CHECK(down.client.sleeps() == std::vector<std::chrono::milliseconds>{500ms, 1000ms, 2000ms});
}

TEST_CASE("client errors are permanent, long throttles are transient") {
  Offline off;
  CHECK_THROWS_AS(off.client.fetch("https://api.github.com/test/forbidden"), PermanentNetworkError);
  CHECK_THROWS_AS(off.client.fetch("https://api.github.com/test/gone"), PermanentNetworkError);
  CHECK(off.client.sleeps().empty());
  try {
    off.client.fetch("https://api.github.com/test/throttled-long");
    FAIL("expected a transient error");
  } catch (const TransientNetworkError& e) {
    CHECK(e.retry_after_s() == 86400);
  }
  CHECK(off.client.sleeps().empty());
}

TEST_CASE("request headers and token") {
  Recorder rec;
  FetchClient anon(rec);
  anon.fetch("https://x/y");
  CHECK(rec.last_headers.at("Accept") == "application/vnd.github+json");
  CHECK(rec.last_headers.count("User-Agent") == 1);
  CHECK(rec.last_headers.count("Authorization") == 0);
  FetchClient authed(rec, "s3cret");
  authed.fetch("https://x/y", "application/vnd.github.diff");
  CHECK(rec.last_headers.at("Authorization") == "Bearer s3cret");
  CHECK(rec.last_headers.at("Accept") == "application/vnd.github.diff");
}

TEST_CASE("fetch log is JSONL with url, status, timestamp and attempt") {
  Offline off;
  off.client.fetch("https://api.github.com/test/retry-after");
  const auto path = std::filesystem::temp_directory_path() / "patchfuse_fetch" / "log.jsonl";
  std::filesystem::remove_all(path.parent_path());
  off.client.write_log(path);
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(in, line)) records.push_back(nlohmann::json::parse(line));
  REQUIRE(records.size() == 2);
  CHECK(records[0].at("status") == 429);
  CHECK(records[0].at("timestamp") == 1000);
  CHECK(records[1].at("attempt") == 2);
  CHECK(records[1].at("url") == "https://api.github.com/test/retry-after");
  std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("harvest targets file") {
  const auto targets = read_harvest_targets(kFixtures / "targets.jsonl");
  REQUIRE(targets.size() == 4);
  CHECK(targets[0].owner == "octo");
  CHECK(targets[0].issue == 7);
  CHECK(targets[0].label.flag == 1);
  CHECK(targets[0].label.cwe_id == "CWE-125");
  CHECK_FALSE(targets[1].label.cve_id.has_value());
}

TEST_CASE("reference validation") {
  CHECK_THROWS(IssueRef{"", "r", 1, "", "", {}, {}}.validate());
  CHECK_THROWS(CommitRef{"o", "r", "abc", "", "", {}}.validate());
  CHECK(IssueRef{"o", "r", 3, "", "", {}, {}}.id() == "o/r#3");
}

}  // TEST_SUITE
