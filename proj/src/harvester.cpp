// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/harvester.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "patchfuse/cwe.hpp"
#include "patchfuse/diff.hpp"
#include "patchfuse/errors.hpp"

namespace patchfuse {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<long long> header_number(const HttpResponse& r, const std::string& name) {
  auto it = r.headers.find(name);
  if (it == r.headers.end()) return std::nullopt;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

nlohmann::json parse_json(const std::string& body, const std::string& what) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what(), 0);
  }
}

std::string string_or_empty(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return "";
  return j.at(key).get<std::string>();
}

std::optional<int> year_of(const std::string& iso) {
  if (iso.size() < 4 || !std::all_of(iso.begin(), iso.begin() + 4, [](unsigned char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  return std::stoi(iso.substr(0, 4));
}

std::string extension_of(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return "";
  return lower(path.substr(dot));
}

}  // namespace

FixtureTransport::FixtureTransport(const std::filesystem::path& dir) {
  const auto index = parse_json(read_text(dir / "exchanges.json"), "fixture index");
  if (!index.is_array()) throw SchemaError("exchanges", 0, "fixture index must be an array");
  for (const auto& e : index) {
    HttpResponse r;
    r.status = e.value("status", 200);
    if (e.contains("headers")) {
      for (const auto& [k, v] : e.at("headers").items()) r.headers[lower(k)] = v.get<std::string>();
    }
    if (e.contains("body_file")) {
      r.body = read_text(dir / e.at("body_file").get<std::string>());
    } else {
      r.body = e.value("body", "");
    }
    exchanges_[{e.at("url").get<std::string>(), e.value("accept", "")}].push_back(std::move(r));
  }
}

HttpResponse FixtureTransport::get(const std::string& url, const std::map<std::string, std::string>& headers) {
  ++calls_;
  auto accept_it = headers.find("Accept");
  const std::string accept = accept_it == headers.end() ? "" : accept_it->second;
  // An entry recorded without an Accept value matches any Accept.
  for (const auto& key : {std::make_pair(url, accept), std::make_pair(url, std::string())}) {
    auto it = exchanges_.find(key);
    if (it == exchanges_.end()) continue;
    std::size_t& n = served_[key];
    const HttpResponse& r = it->second[std::min(n, it->second.size() - 1)];
    ++n;
    return r;
  }
  misses_.push_back(url);
  return {404, {}, "{\"message\":\"Not Found\"}"};
}

nlohmann::json fetch_record_to_json(const FetchRecord& r) {
  return {{"url", r.url}, {"status", r.status}, {"timestamp", r.timestamp}, {"attempt", r.attempt}};
}

FetchClient::FetchClient(HttpTransport& transport, std::optional<std::string> token, FetchPolicy policy,
                         Sleeper sleeper, Clock clock)
    : transport_(transport), token_(std::move(token)), policy_(policy), sleeper_(std::move(sleeper)),
      clock_(std::move(clock)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

std::optional<std::string> FetchClient::token_from_env(const char* var) {
  const char* v = std::getenv(var);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::string FetchClient::fetch(const std::string& url, const std::string& accept) {
  std::map<std::string, std::string> headers = {{"Accept", accept}, {"User-Agent", "patchfuse-harvester"}};
  if (token_) headers["Authorization"] = "Bearer " + *token_;

  std::size_t retries = 0, rate_waits = 0, attempt = 0;
  for (;;) {
    ++attempt;
    const HttpResponse r = transport_.get(url, headers);
    log_.push_back({url, r.status, clock_(), attempt});
    if (r.status >= 200 && r.status < 300) return r.body;

    const auto retry_after = header_number(r, "retry-after");
    const auto remaining = header_number(r, "x-ratelimit-remaining");
    const bool rate_limited = (r.status == 403 || r.status == 429) && (retry_after || (remaining && *remaining == 0));
    if (rate_limited) {
      long long wait_s = 0;
      if (retry_after) {
        wait_s = *retry_after;
      } else if (auto reset = header_number(r, "x-ratelimit-reset")) {
        wait_s = std::max<long long>(0, *reset - clock_()) + 1;
      }
      if (rate_waits >= policy_.max_retries || wait_s > policy_.max_rate_limit_wait.count()) {
        throw TransientNetworkError("rate limit exhausted for " + url + " (retry after " + std::to_string(wait_s) + " s)",
                                    r.status, wait_s);
      }
      ++rate_waits;
      const std::chrono::milliseconds d(wait_s * 1000);
      sleeps_.push_back(d);
      sleeper_(d);
      continue;
    }
    if (r.status >= 400 && r.status < 500) {
      throw PermanentNetworkError("GET " + url + " failed with HTTP " + std::to_string(r.status), r.status,
                                  retry_after.value_or(-1));
    }
    if (retries >= policy_.max_retries) {
      throw TransientNetworkError("GET " + url + " failed after " + std::to_string(retries) + " retries (HTTP " +
                                      std::to_string(r.status) + ")",
                                  r.status, retry_after.value_or(-1));
    }
    const std::chrono::milliseconds d = policy_.base_backoff * (1LL << retries);
    ++retries;
    sleeps_.push_back(d);
    sleeper_(d);
  }
}

void FetchClient::write_log(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write fetch log " + path.string());
  for (const auto& r : log_) out << fetch_record_to_json(r).dump() << '\n';
}

void IssueRef::validate() const {
  if (owner.empty() || repo.empty() || number == 0) throw SchemaError("issue", 0, "owner, repo and number are required");
}

std::string IssueRef::id() const { return owner + "/" + repo + "#" + std::to_string(number); }

bool is_commit_sha(const std::string& s) {
  return s.size() == 40 && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isxdigit(c); });
}

void CommitRef::validate() const {
  if (owner.empty() || repo.empty()) throw SchemaError("commit", 0, "repository is required");
  if (!is_commit_sha(sha)) throw SchemaError("sha", 0, "'" + sha + "' is not a 40-character hex hash");
}

std::vector<CommitRef> link_commits(const IssueRef& issue) {
  static const std::regex pattern(
      R"((?:https?://)?(?:api\.)?github\.com/(?:repos/)?([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+)/(?:pull/\d+/)?commits?/([0-9a-fA-F]{40})\b|\b([0-9a-fA-F]{40})\b)");
  std::vector<const std::string*> texts = {&issue.body};
  std::vector<const IssueComment*> comments;
  for (const auto& c : issue.comments) comments.push_back(&c);
  std::stable_sort(comments.begin(), comments.end(),
                   [](const IssueComment* a, const IssueComment* b) { return a->created_at < b->created_at; });
  for (const auto* c : comments) texts.push_back(&c->body);

  std::vector<CommitRef> out;
  std::set<std::string> seen;
  for (const std::string* text : texts) {
    for (std::sregex_iterator it(text->begin(), text->end(), pattern), end; it != end; ++it) {
      const auto& m = *it;
      CommitRef ref;
      if (m[3].matched) {
        ref.owner = m[1].str();
        ref.repo = m[2].str();
        ref.sha = lower(m[3].str());
      } else {
        ref.owner = issue.owner;
        ref.repo = issue.repo;
        ref.sha = lower(m[4].str());
      }
      if (seen.insert(lower(ref.owner + "/" + ref.repo) + "@" + ref.sha).second) out.push_back(std::move(ref));
    }
  }
  return out;
}

bool is_code_file(const std::string& path) {
  static const std::set<std::string> kCode = {".c", ".cc", ".java", ".py"};
  return kCode.count(extension_of(path)) != 0;
}

BuildResult build_sample(const IssueRef& issue, const std::vector<CommitRef>& commits, const LabelInfo& label) {
  issue.validate();
  if (commits.empty()) return {std::nullopt, "no linked commits"};
  std::vector<FileDiff> kept;
  std::vector<std::string> messages;
  for (const auto& c : commits) {
    c.validate();
    for (auto& f : parse_diff_files(c.diff)) {
      if (is_code_file(f.path())) kept.push_back(std::move(f));
    }
    if (!c.message.empty()) messages.push_back(c.message);
  }
  const PatchText patch = merge_files(kept);
  if (patch.added.empty() && patch.deleted.empty()) {
    return {std::nullopt, "no changed lines in .c/.cc/.java/.py files"};
  }

  Sample s;
  s.id = issue.id();
  s.description = issue.title.empty() ? issue.body : issue.title + "\n" + issue.body;
  for (std::size_t i = 0; i < messages.size(); ++i) s.commit_message += (i ? "\n" : "") + messages[i];
  s.patch_add = patch.added;
  s.patch_del = patch.deleted;
  s.flag = label.flag;
  s.cve_id = label.cve_id;
  s.cwe_id = label.cwe_id;
  if (label.flag == 1 && label.cwe_id) s.cwe_label = cwe::merge_cwe(*label.cwe_id);
  s.year = label.cve_id ? year_from_cve(*label.cve_id) : std::nullopt;
  if (!s.year) s.year = issue.created_year;
  validate_sample(s);
  return {std::move(s), ""};
}

IssueRef Harvester::fetch_issue(const std::string& owner, const std::string& repo, std::uint64_t number) {
  IssueRef issue;
  issue.owner = owner;
  issue.repo = repo;
  issue.number = number;
  issue.validate();
  const std::string base = api_root_ + "/repos/" + owner + "/" + repo + "/issues/" + std::to_string(number);
  const auto j = parse_json(client_.fetch(base), "issue " + issue.id());
  issue.title = string_or_empty(j, "title");
  issue.body = string_or_empty(j, "body");
  issue.created_year = year_of(string_or_empty(j, "created_at"));
  const auto comments = parse_json(client_.fetch(base + "/comments?per_page=100"), "comments of " + issue.id());
  if (!comments.is_array()) throw SchemaError("comments", 0, "expected an array");
  for (const auto& c : comments) issue.comments.push_back({string_or_empty(c, "body"), string_or_empty(c, "created_at")});
  return issue;
}

CommitRef Harvester::fetch_commit(CommitRef ref) {
  ref.validate();
  const std::string url = api_root_ + "/repos/" + ref.owner + "/" + ref.repo + "/commits/" + ref.sha;
  const auto j = parse_json(client_.fetch(url), "commit " + ref.sha);
  if (j.contains("commit")) ref.message = string_or_empty(j.at("commit"), "message");
  std::set<std::string> exts;
  if (j.contains("files")) {
    for (const auto& f : j.at("files")) {
      const auto e = extension_of(string_or_empty(f, "filename"));
      if (!e.empty()) exts.insert(e);
    }
  }
  ref.extensions.assign(exts.begin(), exts.end());
  ref.diff = client_.fetch(url, "application/vnd.github.diff");
  return ref;
}

BuildResult Harvester::harvest(const std::string& owner, const std::string& repo, std::uint64_t number,
                               const LabelInfo& label) {
  const IssueRef issue = fetch_issue(owner, repo, number);
  std::vector<CommitRef> commits;
  for (auto& ref : link_commits(issue)) {
    try {
      commits.push_back(fetch_commit(std::move(ref)));
    } catch (const NetworkError& e) {
      return {std::nullopt, std::string("linked commit unfetchable: ") + e.what()};
    }
  }
  return build_sample(issue, commits, label);
}

std::vector<HarvestTarget> read_harvest_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<HarvestTarget> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      HarvestTarget t;
      t.owner = j.at("owner").get<std::string>();
      t.repo = j.at("repo").get<std::string>();
      t.issue = j.at("issue").get<std::uint64_t>();
      t.label.flag = j.value("flag", 0);
      if (j.contains("cve_id") && !j.at("cve_id").is_null()) t.label.cve_id = j.at("cve_id").get<std::string>();
      if (j.contains("cwe_id") && !j.at("cwe_id").is_null()) t.label.cwe_id = j.at("cwe_id").get<std::string>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("harvest target: ") + e.what(), n);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("target", n, e.what());
    }
  }
  return out;
}

}  // namespace patchfuse
