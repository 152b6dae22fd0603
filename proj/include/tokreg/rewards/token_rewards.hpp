// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "tokreg/model/transformer.hpp"

namespace tokreg::rewards {

enum class RewardSource { kContrastive, kDpoImplicit };

std::string_view source_name(RewardSource source) noexcept;
RewardSource source_from_name(std::string_view name);

/// Per-token rewards aligned with one response (including its <eos>).
struct TokenRewardVector {
  std::vector<double> values;
  RewardSource source = RewardSource::kContrastive;

  std::size_t size() const noexcept { return values.size(); }
};

/// beta * (log pi_policy - log pi_reference) at every response token.
/// Throws ConfigError when the two models do not share a vocabulary, and
/// ConfigError when beta <= 0.
TokenRewardVector dpo_implicit_token_rewards(const model::TransformerLM& policy,
                                             const model::TransformerLM& reference,
                                             std::span<const int> tokens, std::size_t prompt_len,
                                             double beta);

/// Sum of the implicit token rewards (the prompt value term cancels in every
/// pairwise use and is omitted).
double dpo_sequence_reward(const model::TransformerLM& policy,
                           const model::TransformerLM& reference, std::span<const int> tokens,
                           std::size_t prompt_len, double beta);

void require_shared_vocabulary(const model::TransformerLM& a, const model::TransformerLM& b);

}  // namespace tokreg::rewards
