// SPDX-License-Identifier: Apache-2.0
//
// Merging raw CWE identifiers into the twelve training labels.
//
//   label  category                 layer
//     1    CWE-664                  first
//     2    CWE-707                  first
//     3    CWE-710                  first
//     4    CWE-682                  first
//     5    CWE-691                  first
//     6    CWE-1 (693 435 697 703 417)   first, merged
//     7    CWE-284                  first
//     8    CWE-1000 (undetermined)  first
//     9    CWE-118                  second (under 664)
//    10    CWE-404                  second (under 664)
//    11    CWE-668                  second (under 664)
//    12    CWE-2 (913 706 704 669 666 665)   second, merged
//
// An identifier not listed directly is resolved by walking its parents in a
// bundled fragment of the research-view tree until a listed category is hit.
// Anything unresolvable lands in label 8.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace patchfuse::cwe {

inline constexpr int kUndeterminedLabel = 8;

struct CategoryRow {
  std::string category;   // "CWE-664", "CWE-1", ...
  int label;
  int layer;              // 1 or 2
  int reported_count;     // sample count in the reference corpus
  std::vector<int> members;
};

/// The twelve rows, ordered by label.
const std::vector<CategoryRow>& category_table();

/// Child → primary parent edges of the bundled tree fragment.
class CweTree {
 public:
  CweTree() = default;
  explicit CweTree(std::unordered_map<int, int> parent_of) : parent_of_(std::move(parent_of)) {}

  static const CweTree& bundled();

  std::optional<int> parent(int id) const;
  std::size_t size() const { return parent_of_.size(); }

 private:
  std::unordered_map<int, int> parent_of_;
};

/// "CWE-125", "cwe-125", "125" → 125. Returns nullopt for anything else
/// (including NVD-CWE-Other / NVD-CWE-noinfo).
std::optional<int> parse_cwe_number(std::string_view raw);

/// Merged label in 1..12.
int merge_cwe(std::string_view raw_cwe_id, const CweTree& tree = CweTree::bundled());

/// Canonical category name for a label ("CWE-664", "CWE-1", ...).
const std::string& category_name(int label);

}  // namespace patchfuse::cwe
