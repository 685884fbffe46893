// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/sample.hpp"

#include <fstream>
#include <regex>

#include "patchfuse/errors.hpp"

namespace patchfuse {

using nlohmann::json;

void validate_sample(const Sample& s, std::size_t line) {
  if (s.id.empty()) throw SchemaError("id", line, "must be a non-empty string");
  if (s.flag != 0 && s.flag != 1) throw SchemaError("flag", line, "must be 0 or 1");
  if (s.cwe_label) {
    if (s.flag == 0) throw SchemaError("cwe_label", line, "must be absent when flag is 0");
    if (*s.cwe_label < 1 || *s.cwe_label > kNumCweLabels) {
      throw SchemaError("cwe_label", line, "must be in 1..12, got " + std::to_string(*s.cwe_label));
    }
  }
}

json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["text"] = s.description;
  j["message"] = s.commit_message;
  j["patch_add"] = s.patch_add;
  j["patch_del"] = s.patch_del;
  j["flag"] = s.flag;
  j["cwe_label"] = s.cwe_label ? json(*s.cwe_label) : json(nullptr);
  j["year"] = s.year ? json(*s.year) : json(nullptr);
  j["cve_id"] = s.cve_id ? json(*s.cve_id) : json(nullptr);
  j["cwe_id"] = s.cwe_id ? json(*s.cwe_id) : json(nullptr);
  return j;
}

namespace {

std::string required_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw SchemaError(key, line, "missing");
  if (!j[key].is_string()) throw SchemaError(key, line, "must be a string");
  return j[key].get<std::string>();
}

std::optional<int> optional_int(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number_integer()) throw SchemaError(key, line, "must be an integer or null");
  return j[key].get<int>();
}

std::optional<std::string> optional_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw SchemaError(key, line, "must be a string or null");
  return j[key].get<std::string>();
}

}  // namespace

Sample sample_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError("<record>", line, "must be a JSON object");
  Sample s;
  s.id = required_string(j, "id", line);
  s.description = required_string(j, "text", line);
  s.commit_message = required_string(j, "message", line);
  const bool has_add = j.contains("patch_add") && !j["patch_add"].is_null();
  const bool has_del = j.contains("patch_del") && !j["patch_del"].is_null();
  if (!has_add && !has_del) throw SchemaError("patch_add", line, "patch_add and patch_del are both absent");
  if (has_add) s.patch_add = required_string(j, "patch_add", line);
  if (has_del) s.patch_del = required_string(j, "patch_del", line);
  if (!j.contains("flag")) throw SchemaError("flag", line, "missing");
  if (j["flag"].is_boolean()) {
    s.flag = j["flag"].get<bool>() ? 1 : 0;
  } else if (j["flag"].is_number_integer()) {
    s.flag = j["flag"].get<int>();
  } else {
    throw SchemaError("flag", line, "must be 0/1 or a boolean");
  }
  s.cwe_label = optional_int(j, "cwe_label", line);
  s.year = optional_int(j, "year", line);
  s.cve_id = optional_string(j, "cve_id", line);
  s.cwe_id = optional_string(j, "cwe_id", line);
  validate_sample(s, line);
  return s;
}

std::vector<Sample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<Sample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError("corpus record is not valid JSON: " + std::string(e.what()), line);
    }
    out.push_back(sample_from_json(j, line));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write corpus " + path.string());
  std::size_t line = 0;
  for (const auto& s : samples) {
    validate_sample(s, ++line);
    out << sample_to_json(s).dump() << '\n';
  }
  if (!out) throw IoError("failed writing corpus " + path.string());
}

YearSplit split_by_year(const std::vector<Sample>& samples, int test_year) {
  YearSplit split;
  for (const auto& s : samples) {
    if (!s.year) {
      split.rejected.push_back({s.id, "missing year"});
    } else if (*s.year < test_year) {
      split.train.push_back(s);
    } else if (*s.year == test_year) {
      split.test.push_back(s);
    }
  }
  return split;
}

std::optional<int> year_from_cve(const std::string& cve_id) {
  static const std::regex re(R"(^\s*CVE-(\d{4})-\d{4,}\s*$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(cve_id, m, re)) return std::nullopt;
  return std::stoi(m[1].str());
}

}  // namespace patchfuse
