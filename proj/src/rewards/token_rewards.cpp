// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/rewards/token_rewards.hpp"

#include "tokreg/errors.hpp"

namespace tokreg::rewards {

std::string_view source_name(RewardSource source) noexcept {
  return source == RewardSource::kContrastive ? "contrastive" : "dpo_implicit";
}

RewardSource source_from_name(std::string_view name) {
  if (name == "contrastive") return RewardSource::kContrastive;
  if (name == "dpo_implicit") return RewardSource::kDpoImplicit;
  throw ConfigError("unknown reward source \"" + std::string(name) +
                    "\" (expected contrastive or dpo_implicit)");
}

void require_shared_vocabulary(const model::TransformerLM& a, const model::TransformerLM& b) {
  if (a.config().vocab_size != b.config().vocab_size) {
    throw ConfigError("models disagree on vocabulary size (" +
                      std::to_string(a.config().vocab_size) + " vs " +
                      std::to_string(b.config().vocab_size) + ")");
  }
}

TokenRewardVector dpo_implicit_token_rewards(const model::TransformerLM& policy,
                                             const model::TransformerLM& reference,
                                             std::span<const int> tokens, std::size_t prompt_len,
                                             double beta) {
  require_shared_vocabulary(policy, reference);
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  const std::vector<double> lp = policy.forward_logprobs(tokens, prompt_len);
  const std::vector<double> ref = reference.forward_logprobs(tokens, prompt_len);
  TokenRewardVector r;
  r.source = RewardSource::kDpoImplicit;
  r.values.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) r.values[i] = beta * (lp[i] - ref[i]);
  return r;
}

double dpo_sequence_reward(const model::TransformerLM& policy,
                           const model::TransformerLM& reference, std::span<const int> tokens,
                           std::size_t prompt_len, double beta) {
  double s = 0.0;
  for (double v : dpo_implicit_token_rewards(policy, reference, tokens, prompt_len, beta).values) {
    s += v;
  }
  return s;
}

}  // namespace tokreg::rewards
