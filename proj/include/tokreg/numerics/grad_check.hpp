// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "tokreg/numerics/tape.hpp"

namespace tokreg::numerics {

// Builds a scalar loss on the given tape. Parameters must be bound with
// Tape::parameter() so that in-place perturbation is observed.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // 2: (f(x+h) - f(x-h)) / 2h. 4: five-point stencil, truncation error O(h^4).
  int order = 2;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
  // coordinates whose true gradient is ~0 from reporting rounding noise.
  double abs_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t tensor_index = 0;
  std::size_t coord = 0;
  std::size_t checked = 0;
};

/// Central finite differences per coordinate against the tape gradient.
/// Throws DiagnosticError when the loss is non-finite at any evaluation point.
GradCheckReport grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           const GradCheckOptions& options = {});

double grad_check(const LossBuilder& loss, Tensor& param, double eps);

}  // namespace tokreg::numerics
