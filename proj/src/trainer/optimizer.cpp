// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/trainer/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tokreg/errors.hpp"

namespace tokreg::trainer {

using numerics::Tensor;

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                    AdamWState& state, double lr, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] == nullptr) continue;
    if (grads[i]->shape() != params[i]->shape()) {
      throw DimensionError("optimizer_step: gradient " + numerics::shape_to_string(grads[i]->shape()) +
                           " for parameter " + numerics::shape_to_string(params[i]->shape()));
    }
    if (!grads[i]->all_finite()) {
      throw DiagnosticError("optimizer_step: non-finite gradient for parameter " +
                            std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros_like(*p));
      state.v.push_back(Tensor::zeros_like(*p));
    }
  } else if (state.m.size() != params.size()) {
    throw DimensionError("optimizer_step: state holds " + std::to_string(state.m.size()) +
                         " moments for " + std::to_string(params.size()) + " parameters");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i] ? (*grads[i])[k] : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      if (cfg.weight_decay != 0.0) p[k] -= lr * cfg.weight_decay * p[k];
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::string_view schedule_name(LrSchedule schedule) noexcept {
  return schedule == LrSchedule::kConstant ? "constant" : "cosine";
}

LrSchedule schedule_from_name(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosineWithWarmup;
  throw ConfigError("lr_schedule: expected constant or cosine, got \"" + std::string(name) + "\"");
}

double learning_rate_at(std::size_t step, std::size_t total_steps, double base_lr,
                        LrSchedule schedule, std::size_t warmup_steps) {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (schedule == LrSchedule::kConstant || total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

double clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads) {
    if (g == nullptr) continue;
    for (double v : g->data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor* g : grads) {
      if (g == nullptr) continue;
      for (double& v : g->data()) v *= factor;
    }
  }
  return norm;
}

}  // namespace tokreg::trainer
