// SPDX-License-Identifier: Apache-2.0
//
// Corpus construction from a code-hosting REST API: fetch an issue and its
// comments, find linked commits, fetch their diffs, and turn the result into
// a Sample. Every request goes through an HttpTransport, so the whole module
// runs offline against recorded exchanges.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/sample.hpp"

namespace patchfuse {

struct HttpResponse {
  int status = 0;                              // 0: no response (connection failure)
  std::map<std::string, std::string> headers;  // lower-cased names
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url, const std::map<std::string, std::string>& headers) = 0;
};

/// Real network access through cpp-httplib (HTTPS when built with TLS).
class LiveTransport : public HttpTransport {
 public:
  explicit LiveTransport(std::chrono::seconds timeout = std::chrono::seconds(30)) : timeout_(timeout) {}
  HttpResponse get(const std::string& url, const std::map<std::string, std::string>& headers) override;

 private:
  std::chrono::seconds timeout_;
};

/// Replays recorded exchanges from `<dir>/exchanges.json`:
///   [{"url": ..., "accept": optional, "status": 200, "headers": {...},
///     "body": "..." | "body_file": "relative/path"}, ...]
/// Entries with the same (url, accept) are served in order; the last one
/// repeats. Unknown requests get a 404 and are recorded as misses.
class FixtureTransport : public HttpTransport {
 public:
  explicit FixtureTransport(const std::filesystem::path& dir);
  HttpResponse get(const std::string& url, const std::map<std::string, std::string>& headers) override;

  std::size_t calls() const { return calls_; }
  const std::vector<std::string>& misses() const { return misses_; }

 private:
  std::map<std::pair<std::string, std::string>, std::vector<HttpResponse>> exchanges_;
  std::map<std::pair<std::string, std::string>, std::size_t> served_;
  std::size_t calls_ = 0;
  std::vector<std::string> misses_;
};

struct FetchRecord {
  std::string url;
  int status = 0;
  std::int64_t timestamp = 0;  // seconds since the epoch
  std::size_t attempt = 1;
};

nlohmann::json fetch_record_to_json(const FetchRecord& r);

struct FetchPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base_backoff{500};  // doubled on every retry
  std::chrono::seconds max_rate_limit_wait{3600};
};

/// GET with retries, exponential backoff and rate-limit handling. Sleep and
/// clock are injectable so tests run instantly.
class FetchClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  using Clock = std::function<std::int64_t()>;

  FetchClient(HttpTransport& transport, std::optional<std::string> token = std::nullopt, FetchPolicy policy = {},
              Sleeper sleeper = {}, Clock clock = {});

  /// Reads the token from the environment variable (unset → anonymous).
  static std::optional<std::string> token_from_env(const char* var = "PATCHFUSE_GITHUB_TOKEN");

  /// Body of a 2xx response. 4xx (other than rate limiting) → permanent
  /// error; 5xx or no response after all retries → transient error.
  std::string fetch(const std::string& url, const std::string& accept = "application/vnd.github+json");

  const std::vector<FetchRecord>& log() const { return log_; }
  /// JSONL, one record per request.
  void write_log(const std::filesystem::path& path) const;
  const std::vector<std::chrono::milliseconds>& sleeps() const { return sleeps_; }

 private:
  HttpTransport& transport_;
  std::optional<std::string> token_;
  FetchPolicy policy_;
  Sleeper sleeper_;
  Clock clock_;
  std::vector<FetchRecord> log_;
  std::vector<std::chrono::milliseconds> sleeps_;
};

struct IssueComment {
  std::string body;
  std::string created_at;  // ISO 8601
};

struct IssueRef {
  std::string owner;
  std::string repo;
  std::uint64_t number = 0;
  std::string title;
  std::string body;
  std::vector<IssueComment> comments;
  std::optional<int> created_year;

  void validate() const;
  std::string id() const;  // owner/repo#number
};

struct CommitRef {
  std::string owner;
  std::string repo;
  std::string sha;  // 40 hex characters
  std::string message;
  std::string diff;
  std::vector<std::string> extensions;  // touched file extensions, lower-case

  void validate() const;
};

bool is_commit_sha(const std::string& s);

/// Commit candidates from the body first, then comments in chronological
/// order. Recognizes commit URLs (…/owner/repo/commit/<sha>, also under a
/// pull request) and bare 40-hex hashes (taken to belong to the issue's
/// repository). Duplicates keep their first position.
std::vector<CommitRef> link_commits(const IssueRef& issue);

/// .c .cc .java .py, case-insensitive.
bool is_code_file(const std::string& path);

struct LabelInfo {
  int flag = 0;
  std::optional<std::string> cve_id;
  std::optional<std::string> cwe_id;
};

struct BuildResult {
  std::optional<Sample> sample;
  std::string rejection;  // set when sample is empty
};

/// Merges the code-file hunks of every commit in link order. Rejects when no
/// code line changed. The year comes from the CVE id when present, else the
/// issue's creation year.
BuildResult build_sample(const IssueRef& issue, const std::vector<CommitRef>& commits, const LabelInfo& label);

/// Default API root; overridable for enterprise hosts and fixtures.
inline constexpr const char* kDefaultApiRoot = "https://api.github.com";

class Harvester {
 public:
  Harvester(FetchClient& client, std::string api_root = kDefaultApiRoot)
      : client_(client), api_root_(std::move(api_root)) {}

  IssueRef fetch_issue(const std::string& owner, const std::string& repo, std::uint64_t number);
  /// Fills message, diff and extensions.
  CommitRef fetch_commit(CommitRef ref);
  /// fetch_issue → link_commits → fetch_commit each → build_sample. Fetch
  /// failures of a linked commit reject the sample with the reason.
  BuildResult harvest(const std::string& owner, const std::string& repo, std::uint64_t number,
                      const LabelInfo& label);

 private:
  FetchClient& client_;
  std::string api_root_;
};

/// One harvest target per line: {"owner", "repo", "issue", "flag", "cve_id"?, "cwe_id"?}.
struct HarvestTarget {
  std::string owner;
  std::string repo;
  std::uint64_t issue = 0;
  LabelInfo label;
};

std::vector<HarvestTarget> read_harvest_targets(const std::filesystem::path& path);

}  // namespace patchfuse
