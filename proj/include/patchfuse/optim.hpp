// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchfuse/autodiff.hpp"

namespace patchfuse {

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First/second moment buffers for one parameter tensor.
struct MomentBuffers {
  std::vector<double> m;
  std::vector<double> v;
};

/// Decoupled-weight-decay Adam on flat buffers. `step` is the 1-based index
/// of this update and drives the bias corrections.
void adamw_step(std::span<double> params, std::span<const double> grads, MomentBuffers& state,
                std::uint64_t step, const AdamWConfig& cfg);

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Updates every trainable parameter from its accumulated gradient.
  void step(ParameterStore& params);
  std::uint64_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<MomentBuffers> state_;
};

}  // namespace patchfuse
