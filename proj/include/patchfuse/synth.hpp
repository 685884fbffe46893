// SPDX-License-Identifier: Apache-2.0
//
// Hermetic synthetic corpus. Vulnerability-fixing samples carry planted
// indicator tokens in the report, message and patch; non-fixing samples carry
// a disjoint benign set. Each positive also carries a token tied to its merged
// CWE label. Training records are dated 2018-2019 and test records 2020, so
// the chronological split separates them.

#pragma once

#include <cstdint>
#include <vector>

#include "patchfuse/sample.hpp"

namespace patchfuse {

struct SynthSpec {
  std::size_t train = 64;
  std::size_t test = 32;
  std::uint64_t seed = 42;
};

/// Train records first, then test records; each half is class-balanced.
std::vector<Sample> synthetic_corpus(const SynthSpec& spec = {});

}  // namespace patchfuse
