// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/diagnostics/credit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokreg/errors.hpp"
#include "tokreg/rewards/token_rewards.hpp"

namespace tokreg::diagnostics {
namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

void to_json(nlohmann::json& j, const CreditMetrics& m) {
  j = {{"sign_accuracy", m.sign_accuracy},     {"localization", m.localization},
       {"rank_correlation", m.rank_correlation}, {"records", m.records},
       {"zero_sign_count", m.zero_sign_count},   {"sign_at_zero", m.sign_at_zero}};
}

CreditMetrics credit_metrics_from_rewards(std::span<const std::vector<double>> rejected_rewards,
                                          std::span<const data::Span> spans) {
  if (rejected_rewards.size() != spans.size()) {
    throw DimensionError("credit_metrics: " + std::to_string(rejected_rewards.size()) +
                         " reward vectors for " + std::to_string(spans.size()) + " spans");
  }
  CreditMetrics m;
  m.records = spans.size();
  if (spans.empty()) return m;
  for (std::size_t r = 0; r < spans.size(); ++r) {
    const auto& v = rejected_rewards[r];
    const data::Span span = spans[r];
    if (span.start >= span.end || span.end > v.size()) {
      throw DimensionError("credit_metrics: span [" + std::to_string(span.start) + ", " +
                           std::to_string(span.end) + ") outside a response of " +
                           std::to_string(v.size()) + " tokens");
    }
    double span_sum = 0.0;
    for (std::size_t i = span.start; i < span.end; ++i) span_sum += v[i];
    const double span_mean = span_sum / static_cast<double>(span.size());
    if (span_mean < 0.0) {
      m.sign_accuracy += 1.0;
    } else if (span_mean == 0.0) {
      m.sign_accuracy += 0.5;
      ++m.zero_sign_count;
    }

    const double lowest = *std::min_element(v.begin(), v.end());
    std::size_t tied = 0, tied_in_span = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == lowest) {
        ++tied;
        if (span.contains(i)) ++tied_in_span;
      }
    }
    m.localization += static_cast<double>(tied_in_span) / static_cast<double>(tied);

    std::vector<double> magnitude(v.size()), member(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      magnitude[i] = std::abs(v[i]);
      member[i] = span.contains(i) ? 1.0 : 0.0;
    }
    m.rank_correlation += spearman(magnitude, member);
  }
  const double n = static_cast<double>(spans.size());
  m.sign_accuracy /= n;
  m.localization /= n;
  m.rank_correlation /= n;
  m.sign_at_zero = m.zero_sign_count > 0;
  return m;
}

CreditMetrics credit_metrics(const model::TransformerLM& policy,
                             const model::TransformerLM& reference,
                             std::span<const data::PreferencePair> planted, double beta) {
  std::vector<std::vector<double>> rewards;
  std::vector<data::Span> spans;
  rewards.reserve(planted.size());
  spans.reserve(planted.size());
  for (const auto& pair : planted) {
    if (!pair.planted_span) {
      throw ConfigError("credit_metrics: record " + pair.id + " has no planted span");
    }
    data::TokenSeq seq = pair.prompt;
    seq.insert(seq.end(), pair.rejected.begin(), pair.rejected.end());
    rewards.push_back(
        rewards::dpo_implicit_token_rewards(policy, reference, seq, pair.prompt_len(), beta)
            .values);
    spans.push_back(*pair.planted_span);
  }
  return credit_metrics_from_rewards(rewards, spans);
}

}  // namespace tokreg::diagnostics
