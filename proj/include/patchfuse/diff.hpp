// SPDX-License-Identifier: Apache-2.0
//
// Unified-diff extraction of added and deleted code.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace patchfuse {

struct FileDiff {
  std::string old_path;
  std::string new_path;
  std::vector<std::string> added;
  std::vector<std::string> deleted;

  /// The post-change path, or the pre-change path for deletions.
  const std::string& path() const;
};

struct PatchText {
  std::string added;
  std::string deleted;

  bool operator==(const PatchText&) const = default;
};

/// Splits a (possibly multi-file) unified diff into per-file line sets.
/// Inside a hunk, line kinds are decided by the header's line counts, so
/// content lines that start with "+++" or "---" are never mistaken for file
/// headers. Outside hunks, bare "+"/"-" lines are still collected.
/// Throws ParseError with a 1-based line number on a malformed hunk header.
std::vector<FileDiff> parse_diff_files(std::string_view diff_text);

/// Added and deleted lines of every file, merged in file order and joined
/// with '\n'.
PatchText parse_unified_diff(std::string_view diff_text);

PatchText merge_files(const std::vector<FileDiff>& files);

/// Renders a single-file diff with one hunk containing the given lines.
std::string synthesize_diff(const std::string& path, const std::vector<std::string>& added,
                            const std::vector<std::string>& deleted);

}  // namespace patchfuse
