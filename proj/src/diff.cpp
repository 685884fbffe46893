// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/diff.hpp"

#include <regex>

#include "patchfuse/errors.hpp"

namespace patchfuse {

const std::string& FileDiff::path() const {
  return (new_path.empty() || new_path == "/dev/null") ? old_path : new_path;
}

namespace {

std::string strip_prefix(std::string p) {
  if (const auto tab = p.find('\t'); tab != std::string::npos) p.resize(tab);
  while (!p.empty() && (p.back() == '\r' || p.back() == ' ')) p.pop_back();
  if (p.size() > 2 && (p.rfind("a/", 0) == 0 || p.rfind("b/", 0) == 0)) p.erase(0, 2);
  return p;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

}  // namespace

std::vector<FileDiff> parse_diff_files(std::string_view diff_text) {
  static const std::regex hunk_re(R"(^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@.*$)");
  std::vector<FileDiff> files;
  auto current = [&]() -> FileDiff& {
    if (files.empty()) files.emplace_back();
    return files.back();
  };
  // A "diff --git" line or a "---" header after hunk content opens a new file.
  bool file_has_content = false;
  long old_left = 0, new_left = 0;
  const auto lines = split_lines(diff_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    const std::size_t lineno = i + 1;
    if (old_left > 0 || new_left > 0) {
      if (line.empty() || line[0] == ' ') {
        --old_left;
        --new_left;
        continue;
      }
      if (line[0] == '+') {
        current().added.emplace_back(line.substr(1));
        --new_left;
        continue;
      }
      if (line[0] == '-') {
        current().deleted.emplace_back(line.substr(1));
        --old_left;
        continue;
      }
      if (line[0] == '\\') continue;
      // Hunk ended early (truncated counts); fall through to header handling.
      old_left = new_left = 0;
    }
    if (line.size() >= 1 && line[0] == '\\') continue;
    if (starts_with(line, "diff --git ")) {
      files.emplace_back();
      file_has_content = false;
      static const std::regex git_re(R"(^diff --git (\S+) (\S+)$)");
      std::match_results<std::string_view::const_iterator> m;
      if (std::regex_match(line.begin(), line.end(), m, git_re)) {
        files.back().old_path = strip_prefix(m[1].str());
        files.back().new_path = strip_prefix(m[2].str());
      }
      continue;
    }
    if (starts_with(line, "@@")) {
      std::match_results<std::string_view::const_iterator> m;
      if (!std::regex_match(line.begin(), line.end(), m, hunk_re)) {
        throw ParseError("malformed hunk header '" + std::string(line) + "'", lineno);
      }
      old_left = m[2].matched ? std::stol(m[2].str()) : 1;
      new_left = m[4].matched ? std::stol(m[4].str()) : 1;
      current();
      file_has_content = true;
      continue;
    }
    if (starts_with(line, "--- ")) {
      if (files.empty() || file_has_content) {
        files.emplace_back();
        file_has_content = false;
      }
      files.back().old_path = strip_prefix(std::string(line.substr(4)));
      continue;
    }
    if (starts_with(line, "+++ ")) {
      current().new_path = strip_prefix(std::string(line.substr(4)));
      continue;
    }
    if (!line.empty() && line[0] == '+') {
      current().added.emplace_back(line.substr(1));
      file_has_content = true;
    } else if (!line.empty() && line[0] == '-') {
      current().deleted.emplace_back(line.substr(1));
      file_has_content = true;
    }
    // Anything else (index lines, mode changes, "Binary files differ") is metadata.
  }
  return files;
}

PatchText merge_files(const std::vector<FileDiff>& files) {
  std::vector<std::string> added, deleted;
  for (const auto& f : files) {
    added.insert(added.end(), f.added.begin(), f.added.end());
    deleted.insert(deleted.end(), f.deleted.begin(), f.deleted.end());
  }
  return {join(added), join(deleted)};
}

PatchText parse_unified_diff(std::string_view diff_text) { return merge_files(parse_diff_files(diff_text)); }

std::string synthesize_diff(const std::string& path, const std::vector<std::string>& added,
                            const std::vector<std::string>& deleted) {
  std::string out = "diff --git a/" + path + " b/" + path + "\n";
  out += "--- a/" + path + "\n+++ b/" + path + "\n";
  out += "@@ -1," + std::to_string(deleted.size()) + " +1," + std::to_string(added.size()) + " @@\n";
  for (const auto& d : deleted) out += "-" + d + "\n";
  for (const auto& a : added) out += "+" + a + "\n";
  return out;
}

}  // namespace patchfuse
