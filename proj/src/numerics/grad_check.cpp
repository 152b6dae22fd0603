// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tokreg/errors.hpp"

namespace tokreg::numerics {
namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape(Tape::Mode::kInference);
  const double v = loss(tape).value().item();
  if (!std::isfinite(v)) throw DiagnosticError("grad_check: non-finite loss " + std::to_string(v));
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           const GradCheckOptions& options) {
  Tape tape;
  Var root = loss(tape);
  if (!std::isfinite(root.value().item())) {
    throw DiagnosticError("grad_check: non-finite loss at the base point");
  }
  tape.backward(root);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) {
    const Tensor* g = tape.grad_of(*p);
    analytic.push_back(g != nullptr ? *g : Tensor::zeros_like(*p));
  }

  if (options.order != 2 && options.order != 4) {
    throw ConfigError("grad_check: order must be 2 or 4, got " + std::to_string(options.order));
  }
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    Tensor& p = *params[ti];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = p[c];
      auto at = [&](double offset) {
        p[c] = saved + offset;
        const double v = evaluate(loss);
        p[c] = saved;
        return v;
      };
      const double h = options.eps;
      const double numeric =
          options.order == 4
              ? (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
              : (at(h) - at(-h)) / (2.0 * h);
      const double a = analytic[ti][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (report.checked++ == 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.analytic = a;
        report.numeric = numeric;
        report.tensor_index = ti;
        report.coord = c;
      }
    }
  }
  return report;
}

double grad_check(const LossBuilder& loss, Tensor& param, double eps) {
  Tensor* ptr = &param;
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(loss, std::span<Tensor* const>(&ptr, 1), options).max_rel_error;
}

}  // namespace tokreg::numerics
