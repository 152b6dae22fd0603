// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokreg/data/batching.hpp"
#include "tokreg/model/transformer.hpp"
#include "tokreg/numerics/tape.hpp"
#include "tokreg/rewards/token_rewards.hpp"

namespace tokreg::losses {

enum class BaseObjective { kDpo, kSimpo };
enum class Weighting { kSequence, kStatic };
enum class Regularize { kBothOutputs, kChosenOnly, kOff };

std::string_view base_name(BaseObjective base) noexcept;
BaseObjective base_from_name(std::string_view name);
std::string_view weighting_name(Weighting weighting) noexcept;
Weighting weighting_from_name(std::string_view name);
std::string_view regularize_name(Regularize regularize) noexcept;
Regularize regularize_from_name(std::string_view name);

/// Objective selection and coefficients.
///
///   base      dpo:   -log sigmoid(beta * (log-ratio(y_w) - log-ratio(y_l)))
///             simpo: -log sigmoid(beta * (avg-lp(y_w) - avg-lp(y_l)) - simpo_gamma)
///   reg       -sum_t beta * r_t * log pi(y_t | x, y_<t), per response
///   weight    sequence: sigmoid(-z) of the base logit z, detached; static: 1
///   total     mean(base) + alpha * mean(w * (reg_w + reg_l)) + sft_coeff * mean(-log pi(y_w|x))
struct LossConfig {
  double beta = 0.1;
  double alpha = 0.25;
  BaseObjective base = BaseObjective::kDpo;
  Weighting weighting = Weighting::kSequence;
  rewards::RewardSource reward_source = rewards::RewardSource::kContrastive;
  Regularize regularize = Regularize::kBothOutputs;
  double sft_coeff = 0.0;
  double simpo_gamma = 0.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool regularized() const noexcept { return regularize != Regularize::kOff && alpha != 0.0; }
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

struct PairLossBreakdown {
  double base_loss = 0.0;
  double reg_loss_w = 0.0;
  double reg_loss_l = 0.0;
  double weight = 0.0;
  double sft_loss = 0.0;  // -log pi(y_w | x), before sft_coeff
  double total = 0.0;
  // beta * (log-ratio(y_w) - log-ratio(y_l)) when reference log-probs are
  // given, otherwise beta * (avg-lp(y_w) - avg-lp(y_l)).
  double reward_margin = 0.0;
  friend bool operator==(const PairLossBreakdown&, const PairLossBreakdown&) = default;
};

/// Inputs for a batch of P pairs packed by data::pack_pairs (chosen
/// sequences first, then rejected).
struct PairBatch {
  const data::SequenceBatch* batch = nullptr;
  // Reference response log-prob sums, one per sequence (2P). Required for
  // dpo; optional for simpo.
  std::span<const double> ref_seq_logprobs;
  // Token rewards flattened in batch response order. Required when the
  // config regularizes.
  std::span<const double> token_rewards;
  // Record ids for error messages (P entries, optional).
  std::span<const std::string> ids;
};

struct BatchLoss {
  numerics::Var total;  // scalar
  std::vector<PairLossBreakdown> pairs;
};

/// Builds the full objective for one batch on `tape`. `weight_override`
/// replaces the computed sequence weights with constants (P entries).
/// Throws DimensionError on misaligned inputs and DiagnosticError naming the
/// record when any loss is non-finite.
BatchLoss batch_loss(numerics::Tape& tape, const model::TransformerLM& policy,
                     const PairBatch& inputs, const LossConfig& cfg,
                     std::optional<std::span<const double>> weight_override = std::nullopt);

/// Mean of a breakdown field over pairs, in pair order.
PairLossBreakdown mean_breakdown(std::span<const PairLossBreakdown> pairs);

// Per-pair entry points. Each evaluates a single-pair batch without
// recording gradients.

struct DpoResult {
  double loss = 0.0;
  double reward_margin = 0.0;
};

DpoResult dpo_loss(const model::TransformerLM& policy, const model::TransformerLM& reference,
                   const data::PreferencePair& pair, double beta);
double simpo_loss(const model::TransformerLM& policy, const data::PreferencePair& pair, double beta,
                  double gamma);
double reg_loss(const model::TransformerLM& policy, std::span<const int> tokens,
                std::size_t prompt_len, const rewards::TokenRewardVector& rewards, double beta);
double sequence_weight(const model::TransformerLM& policy, const model::TransformerLM& reference,
                       const data::PreferencePair& pair, double beta);
PairLossBreakdown treg_loss(const model::TransformerLM& policy,
                            const model::TransformerLM& reference,
                            const rewards::TokenRewardVector& rewards_w,
                            const rewards::TokenRewardVector& rewards_l,
                            const data::PreferencePair& pair, const LossConfig& cfg);
double dpo_sft_loss(const model::TransformerLM& policy, const model::TransformerLM& reference,
                    const data::PreferencePair& pair, double beta, double sft_coeff);

/// Tape form of reg_loss over a single sequence, for gradient checks.
numerics::Var reg_loss(numerics::Tape& tape, const model::TransformerLM& policy,
                       std::span<const int> tokens, std::size_t prompt_len,
                       std::span<const double> rewards, double beta);

/// Reference log-prob sums for the sequences of a pair batch.
std::vector<double> reference_seq_logprobs(const model::TransformerLM& reference,
                                           const data::SequenceBatch& batch);

}  // namespace tokreg::losses
