// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/synth.hpp"

#include <array>
#include <cstdio>
#include <string>

#include "patchfuse/tensor.hpp"

namespace patchfuse {
namespace {

constexpr std::array<const char*, 12> kNeutral = {"module", "handler", "request", "config", "value", "path",
                                                  "user",   "server",  "client",  "list",   "option", "session"};
constexpr std::array<const char*, 4> kVulnWords = {"overflow", "crash", "exploit", "unsafe"};
constexpr std::array<const char*, 4> kBenignWords = {"feature", "typo", "docs", "cleanup"};
constexpr std::array<const char*, 12> kTypeWords = {"bounds",  "sanitize", "deadcode", "arith",   "flowctl", "guard",
                                                    "perm",    "misc",     "memory",   "release", "exposure", "resource"};
constexpr std::array<const char*, 6> kVulnCode = {"if (len > max) return -1;", "check_bounds(buf, len);",
                                                  "if (ptr == NULL) return -1;", "len = min(len, max);",
                                                  "memcpy(buf, src, len);", "free(ptr);"};
constexpr std::array<const char*, 6> kBenignCode = {"log_info(\"ready\");", "name = new_name;",
                                                    "return format(value);", "count += 1;",
                                                    "log_debug(\"ready\");", "title = label;"};

// A real identifier that merges into each label.
constexpr std::array<const char*, 12> kTypeCwe = {"CWE-664", "CWE-707", "CWE-710", "CWE-682",
                                                  "CWE-691", "CWE-693", "CWE-284", "CWE-1000",
                                                  "CWE-125", "CWE-404", "CWE-668", "CWE-913"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& pool, CounterRng& rng) {
  return pool[rng.below(N)];
}

// `words` tokens, mostly from the class pool, a type token (when given) up
// front, the rest neutral.
template <std::size_t N>
std::string sentence(std::size_t words, const std::array<const char*, N>& pool, const std::string& type_word,
                     CounterRng& rng) {
  std::string out = type_word;
  for (std::size_t i = 0; i < words; ++i) {
    if (!out.empty()) out += ' ';
    out += rng.uniform() < 0.7 ? pick(pool, rng) : pick(kNeutral, rng);
  }
  return out;
}

template <std::size_t N>
std::string code(std::size_t lines, const std::array<const char*, N>& pool, const std::string& type_word,
                 CounterRng& rng) {
  std::string out = type_word.empty() ? std::string() : type_word + "_" + pick(kNeutral, rng) + "();";
  for (std::size_t i = 0; i < lines; ++i) {
    if (!out.empty()) out += '\n';
    out += pick(pool, rng);
  }
  return out;
}

Sample make_sample(std::size_t index, bool positive, int year, CounterRng& rng) {
  char id[32];
  std::snprintf(id, sizeof id, "syn-%04zu", index);
  Sample s;
  s.id = id;
  s.flag = positive ? 1 : 0;
  s.year = year;
  if (positive) {
    const int label = static_cast<int>(rng.below(12)) + 1;
    const std::string tw = kTypeWords[static_cast<std::size_t>(label - 1)];
    s.description = sentence(22, kVulnWords, tw, rng);
    s.commit_message = sentence(10, kVulnWords, tw, rng);
    s.patch_add = code(2, kVulnCode, tw, rng);
    s.patch_del = code(2, kVulnCode, "", rng);
    s.cwe_label = label;
    s.cwe_id = kTypeCwe[static_cast<std::size_t>(label - 1)];
    char cve[32];
    std::snprintf(cve, sizeof cve, "CVE-%d-%04zu", year, 1000 + index);
    s.cve_id = cve;
  } else {
    s.description = sentence(22, kBenignWords, "", rng);
    s.commit_message = sentence(10, kBenignWords, "", rng);
    s.patch_add = code(2, kBenignCode, "", rng);
    s.patch_del = code(2, kBenignCode, "", rng);
  }
  return s;
}

}  // namespace

std::vector<Sample> synthetic_corpus(const SynthSpec& spec) {
  CounterRng rng(spec.seed, 0x73796e74);  // "synt"
  std::vector<Sample> out;
  out.reserve(spec.train + spec.test);
  std::size_t index = 0;
  for (std::size_t i = 0; i < spec.train; ++i, ++index) {
    out.push_back(make_sample(index, i % 2 == 0, 2018 + static_cast<int>(i % 4 < 2), rng));
  }
  for (std::size_t i = 0; i < spec.test; ++i, ++index) out.push_back(make_sample(index, i % 2 == 0, 2020, rng));
  return out;
}

}  // namespace patchfuse
