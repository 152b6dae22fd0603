// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tokreg/data/synthetic.hpp"
#include "tokreg/model/transformer.hpp"
#include "tokreg/trainer/optimizer.hpp"

namespace tokreg::trainer {

/// One supervised example: the loss covers `response` only.
struct SftExample {
  data::TokenSeq prompt;
  data::TokenSeq response;
};

/// Supervised corpus that turns a random model into an imperfect copy-task
/// assistant able to follow the answer-revision template.
///
///   plain     prompt -> the correct answer, or a fresh corruption of it
///             (each with probability 1/2)
///   revision  revision prompt embedding the correct or a corrupted answer;
///             "better" -> the correct answer, "worse" -> a fresh corruption
///             of the embedded answer
struct WarmupCorpusOptions {
  double revision_fraction = 0.5;
  data::SyntheticTaskOptions task;
};

std::vector<SftExample> make_synthetic_warmup_corpus(std::size_t n, std::uint64_t seed,
                                                     const WarmupCorpusOptions& options = {});

struct SftConfig {
  std::size_t steps = 0;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::kCosineWithWarmup;
  std::size_t warmup_steps = 0;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
};

/// Minimizes the mean response-token negative log-likelihood with AdamW.
/// Returns the loss of every step. `on_step(step, loss)` is optional.
std::vector<double> sft_train(model::TransformerLM& model, std::span<const SftExample> examples,
                              const SftConfig& config,
                              const std::function<void(std::size_t, double)>& on_step = {});

}  // namespace tokreg::trainer
