// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/noise.hpp"

#include <cctype>
#include <cmath>

#include "patchfuse/errors.hpp"

namespace patchfuse {

void NoiseSpec::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("noise ratio must be in (0, 1), got " + std::to_string(ratio));
}

std::size_t noise_insertions(double ratio, std::size_t units) {
  // The epsilon absorbs representation error so exact halves round up.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(units) + 0.5 + 1e-9));
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> patch_lines(std::string_view text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

namespace {

/// Places `count` draws from `pool` at uniform boundaries of `units`.
template <typename Pool>
std::vector<std::string> interleave(const std::vector<std::string>& units, std::size_t count, const Pool& pool,
                                    CounterRng& rng) {
  std::vector<std::vector<std::string_view>> at(units.size() + 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t boundary = rng.below(units.size() + 1);
    at[boundary].push_back(pool[rng.below(pool.size())]);
  }
  std::vector<std::string> out;
  out.reserve(units.size() + count);
  for (std::size_t b = 0; b <= units.size(); ++b) {
    for (auto item : at[b]) out.emplace_back(item);
    if (b < units.size()) out.push_back(units[b]);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string inject_text_noise(std::string_view text, double ratio, CounterRng& rng) {
  const auto tokens = whitespace_tokens(text);
  const std::size_t n = noise_insertions(ratio, tokens.size());
  if (n == 0) return std::string(text);
  return join(interleave(tokens, n, kNoiseStopWords, rng), ' ');
}

std::string inject_code_noise(std::string_view patch, double ratio, CounterRng& rng) {
  const auto lines = patch_lines(patch);
  const std::size_t n = noise_insertions(ratio, lines.size());
  if (n == 0) return std::string(patch);
  return join(interleave(lines, n, kNoiseCodeBlocks, rng), '\n');
}

Sample inject_noise(const Sample& sample, const NoiseSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, fnv1a(sample.id));
  Sample out = sample;
  out.description = inject_text_noise(sample.description, spec.ratio, rng);
  out.commit_message = inject_text_noise(sample.commit_message, spec.ratio, rng);
  out.patch_add = inject_code_noise(sample.patch_add, spec.ratio, rng);
  out.patch_del = inject_code_noise(sample.patch_del, spec.ratio, rng);
  return out;
}

std::vector<Sample> inject_noise(const std::vector<Sample>& samples, const NoiseSpec& spec) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(inject_noise(s, spec));
  return out;
}

}  // namespace patchfuse
