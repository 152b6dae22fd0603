// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tokreg/numerics/tensor.hpp"

namespace tokreg::trainer {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::size_t step = 0;
  std::vector<numerics::Tensor> m;
  std::vector<numerics::Tensor> v;
};

/// One AdamW update with bias correction and decoupled weight decay:
///   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
/// A null gradient counts as zero. Moments are created on the first call.
/// Throws DimensionError on shape mismatch and DiagnosticError on a
/// non-finite gradient (parameters are left untouched).
void optimizer_step(std::span<numerics::Tensor* const> params,
                    std::span<const numerics::Tensor* const> grads, AdamWState& state, double lr,
                    const AdamWConfig& cfg = {});

enum class LrSchedule { kConstant, kCosineWithWarmup };

std::string_view schedule_name(LrSchedule schedule) noexcept;
LrSchedule schedule_from_name(std::string_view name);

/// Learning rate for 0-based `step`. Warmup ramps linearly to base_lr over
/// `warmup_steps` steps (both schedules), then cosine decays to 0 at
/// `total_steps`.
double learning_rate_at(std::size_t step, std::size_t total_steps, double base_lr,
                        LrSchedule schedule, std::size_t warmup_steps);

/// Scales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_global_norm(std::span<numerics::Tensor* const> grads, double max_norm);

}  // namespace tokreg::trainer
