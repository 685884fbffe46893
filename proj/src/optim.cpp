// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/optim.hpp"

#include <cmath>

#include "patchfuse/errors.hpp"

namespace patchfuse {

void adamw_step(std::span<double> params, std::span<const double> grads, MomentBuffers& state,
                std::uint64_t step, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adamw: parameter/gradient size mismatch");
  if (step == 0) throw ConfigError("adamw: step index is 1-based");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double t = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    // Decay acts on the weight itself and never enters the moment estimates.
    params[i] -= cfg.lr * cfg.weight_decay * params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void AdamW::step(ParameterStore& params) {
  ++step_;
  if (state_.size() < params.size()) state_.resize(params.size());
  std::size_t k = 0;
  for (Parameter& p : params) {
    if (p.trainable) adamw_step(p.value.data, p.grad.data, state_[k], step_, cfg_);
    ++k;
  }
}

}  // namespace patchfuse
