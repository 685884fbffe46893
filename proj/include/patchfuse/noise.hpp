// SPDX-License-Identifier: Apache-2.0
//
// Irrelevant-content injection for robustness evaluation. Text fields get
// stop words inserted between whitespace tokens; patch fields get whole code
// blocks inserted between lines. Each field receives round-half-up(ratio x
// units) insertions at boundaries drawn uniformly from the original
// sequence, so the original content survives as an ordered subsequence.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "patchfuse/sample.hpp"
#include "patchfuse/tensor.hpp"

namespace patchfuse {

inline constexpr std::array<std::string_view, 5> kNoiseStopWords = {"the", "and", "of", "a", "to"};

inline constexpr std::array<std::string_view, 7> kNoiseCodeBlocks = {
    "x = 0\nfor i in range(10):\n    x += i",
    "def dummy_func():\n    return None",
    "print('Hello World')",
    "# Here's a note\npass",
    "temp_list = [1, 2, 3]\nfor item in temp_list:\n    print(item)",
    "try:\n    pass\nexcept:\n    pass",
    "import os\nos.getcwd()",
};

inline constexpr std::array<double, 5> kNoiseRatios = {0.05, 0.10, 0.15, 0.20, 0.25};

struct NoiseSpec {
  double ratio = 0.05;
  std::uint64_t seed = 42;

  void validate() const;
};

/// round-half-up(ratio * units)
std::size_t noise_insertions(double ratio, std::size_t units);

std::vector<std::string> whitespace_tokens(std::string_view text);
/// Lines of a patch field; the empty string has zero lines.
std::vector<std::string> patch_lines(std::string_view text);

/// Noisy text, tokens re-joined by single spaces.
std::string inject_text_noise(std::string_view text, double ratio, CounterRng& rng);
/// Noisy patch, lines re-joined by '\n'.
std::string inject_code_noise(std::string_view patch, double ratio, CounterRng& rng);

/// All four fields; the generator stream is keyed on the sample id so each
/// record's noise is independent of corpus order.
Sample inject_noise(const Sample& sample, const NoiseSpec& spec);
std::vector<Sample> inject_noise(const std::vector<Sample>& samples, const NoiseSpec& spec);

}  // namespace patchfuse
