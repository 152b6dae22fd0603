// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokreg/data/records.hpp"
#include "tokreg/model/transformer.hpp"

namespace tokreg::diagnostics {

/// How well token rewards on rejected responses single out the planted span.
///
///   sign_accuracy     fraction of records whose mean span reward is negative;
///                     a mean of exactly zero scores 0.5 and is counted in
///                     zero_sign_count
///   localization      fraction of records whose minimum-reward token lies in
///                     the span; k tied minima with j inside score j/k
///   rank_correlation  mean per-record Spearman correlation between |reward|
///                     and span membership (0 when either side is constant)
struct CreditMetrics {
  double sign_accuracy = 0.0;
  double localization = 0.0;
  double rank_correlation = 0.0;
  std::size_t records = 0;
  std::size_t zero_sign_count = 0;
  bool sign_at_zero = false;  // true when any record hit the zero convention
};

void to_json(nlohmann::json& j, const CreditMetrics& m);

/// Scores per-token rewards of rejected responses against their spans.
/// Throws DimensionError on misaligned inputs or spans past the response.
CreditMetrics credit_metrics_from_rewards(std::span<const std::vector<double>> rejected_rewards,
                                          std::span<const data::Span> spans);

/// Credit metrics of the implicit rewards beta * log(pi / pi_ref) on every
/// rejected response. Throws ConfigError when a pair has no planted span.
CreditMetrics credit_metrics(const model::TransformerLM& policy,
                             const model::TransformerLM& reference,
                             std::span<const data::PreferencePair> planted, double beta);

/// Spearman correlation with average ranks for ties. Returns 0 when either
/// input is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace tokreg::diagnostics
