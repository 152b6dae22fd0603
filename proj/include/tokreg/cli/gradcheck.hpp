// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tokreg/model/config.hpp"

namespace tokreg::cli {

struct GradCheckSuiteOptions {
  // One-layer model small enough to check every coordinate.
  model::ModelConfig model{.vocab_size = 269, .context_len = 40, .d_model = 8, .n_layers = 1,
                           .n_heads = 2, .seed = 11};
  std::size_t pairs = 2;
  double tolerance = 1e-4;
  // Five-point stencil; its O(h^4) truncation allows a step large enough to
  // keep rounding noise well under the tolerance.
  double eps = 1e-3;
  int order = 4;
  std::size_t max_coords_per_tensor = 0;  // 0: all coordinates
  std::uint64_t seed = 5;
};

struct GradCheckRow {
  std::string loss;
  double max_rel_error = 0.0;
  double analytic = 0.0;  // at the worst coordinate
  double numeric = 0.0;
  std::size_t coords = 0;
  bool pass = false;
};

/// Finite-difference checks of every loss variant: dpo, simpo, reg, treg
/// (sequence weighting), treg_static and dpo_sft.
std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace tokreg::cli
