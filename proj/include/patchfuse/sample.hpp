// SPDX-License-Identifier: Apache-2.0
//
// Corpus records and the line-delimited corpus file.
//
// One JSON object per line with keys
//   id, text, message, patch_add, patch_del, flag, cwe_label, year, cve_id, cwe_id
// `text` is the issue-report body and `message` the commit message. The
// optional keys (cwe_label, year, cve_id, cwe_id) may be absent or null.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace patchfuse {

inline constexpr int kNumCweLabels = 12;

struct Sample {
  std::string id;
  std::string description;
  std::string commit_message;
  std::string patch_add;
  std::string patch_del;
  int flag = 0;
  std::optional<int> cwe_label;  // merged label in 1..12
  std::optional<int> year;
  std::optional<std::string> cve_id;
  std::optional<std::string> cwe_id;

  bool operator==(const Sample&) const = default;
};

/// Throws SchemaError naming the violated field.
void validate_sample(const Sample& s, std::size_t line = 0);

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j, std::size_t line);

std::vector<Sample> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples);

struct Rejection {
  std::string id;
  std::string reason;
};

struct YearSplit {
  std::vector<Sample> train;  // year < 2020
  std::vector<Sample> test;   // year == 2020
  std::vector<Rejection> rejected;
};

inline constexpr int kTestYear = 2020;

/// Chronological split; later years are dropped silently, missing years are
/// rejected with a reason.
YearSplit split_by_year(const std::vector<Sample>& samples, int test_year = kTestYear);

/// Year embedded in an identifier of the form CVE-YYYY-NNNN.
std::optional<int> year_from_cve(const std::string& cve_id);

}  // namespace patchfuse
