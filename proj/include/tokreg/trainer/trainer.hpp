// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokreg/data/records.hpp"
#include "tokreg/diagnostics/credit.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/losses/losses.hpp"
#include "tokreg/model/checkpoint.hpp"
#include "tokreg/model/transformer.hpp"
#include "tokreg/rewards/reward_cache.hpp"
#include "tokreg/trainer/optimizer.hpp"

namespace tokreg::trainer {

struct TrainConfig {
  losses::LossConfig loss;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // caps the step count when nonzero
  std::size_t batch_size = 8;
  double learning_rate = 5e-5;
  LrSchedule lr_schedule = LrSchedule::kCosineWithWarmup;
  long warmup_steps = -1;  // -1: 10% of the total steps
  double grad_clip_norm = 1.0;
  AdamWConfig adam;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;        // 0: evaluate once at the end
  std::size_t eval_batch_size = 16;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool drop_last = true;
  bool strict_rewards = false;  // recompute token rewards in-loop instead of caching

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t total_steps(std::size_t n_pairs) const;
  std::size_t resolved_warmup(std::size_t n_pairs) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepMetrics {
  std::size_t step = 0;  // 1-based count of completed updates
  losses::PairLossBreakdown mean;
  double accuracy = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double wall_time = 0.0;  // seconds since train() started
};

struct EvalMetrics {
  std::size_t step = 0;
  std::size_t pairs = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double margin = 0.0;
  std::optional<diagnostics::CreditMetrics> credit;
};

void to_json(nlohmann::json& j, const StepMetrics& m);
void to_json(nlohmann::json& j, const EvalMetrics& m);

struct TrainRunState {
  std::size_t step = 0;
  AdamWState optimizer;
  std::vector<StepMetrics> history;
  std::vector<EvalMetrics> evals;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_accuracy = -1.0;
};

/// Raised when a loss or gradient turns non-finite; names the last
/// checkpoint that is known to be good.
class TrainingAborted : public DiagnosticError {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path last_good)
      : DiagnosticError(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const noexcept { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct TrainModels {
  model::TransformerLM* policy = nullptr;
  const model::TransformerLM* reference = nullptr;  // frozen snapshot of the initial policy
  const model::TransformerLM* evaluator = nullptr;  // contrastive scorer; defaults to reference
  // Source of dpo_implicit rewards; defaults to the current policy, detached.
  const model::TransformerLM* reward_policy = nullptr;
};

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const EvalMetrics&)> on_eval;
  std::ostream* metrics_log = nullptr;            // one JSON object per line
  const rewards::RewardCache* cache = nullptr;    // consulted before scoring
};

/// Both responses' token rewards for one pair.
struct PairTokenRewards {
  std::vector<double> chosen;
  std::vector<double> rejected;
};

/// Contrastive rewards of both responses, scored one answer at a time.
PairTokenRewards contrastive_pair_rewards(const model::TransformerLM& evaluator,
                                          const data::PreferencePair& pair);

/// Preference optimization over `train`. Runs config.total_steps() updates
/// starting at `resume->step` when given (the policy must already hold the
/// resumed parameters). Deterministic for a fixed config and seed.
TrainRunState train(const TrainConfig& config, const TrainModels& models,
                    std::span<const data::PreferencePair> train_pairs,
                    std::span<const data::PreferencePair> eval_pairs = {},
                    const TrainHooks& hooks = {}, const TrainRunState* resume = nullptr);

/// Held-out metrics with the base objective: mean loss, fraction of pairs
/// with a positive reward margin, mean margin, and credit metrics when every
/// pair has a planted span. Policy and reference are scored on identical
/// batches, so policy == reference gives a margin of exactly 0.
EvalMetrics evaluate(const model::TransformerLM& policy, const model::TransformerLM& reference,
                     std::span<const data::PreferencePair> pairs, const losses::LossConfig& cfg,
                     std::size_t batch_size = 16);

/// Policy checkpoint carrying the optimizer moments and step for resuming.
void save_train_checkpoint(const std::filesystem::path& path, const model::TransformerLM& policy,
                           const TrainRunState& state, const TrainConfig& config);

struct ResumePoint {
  model::TransformerLM policy;
  TrainRunState state;
};
ResumePoint load_train_checkpoint(const std::filesystem::path& path);

}  // namespace tokreg::trainer
