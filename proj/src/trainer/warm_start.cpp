// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/trainer/warm_start.hpp"

#include <random>

#include "tokreg/errors.hpp"
#include "tokreg/numerics/ops.hpp"
#include "tokreg/rewards/contrastive.hpp"

namespace tokreg::trainer {

using numerics::Tape;
using numerics::Tensor;

std::vector<SftExample> make_synthetic_warmup_corpus(std::size_t n, std::uint64_t seed,
                                                     const WarmupCorpusOptions& options) {
  if (options.revision_fraction < 0.0 || options.revision_fraction > 1.0) {
    throw ConfigError("warm-up corpus: revision_fraction must be in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SftExample> out;
  out.reserve(n);
  data::Span span;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string word = data::synthetic_random_word(rng, options.task);
    const std::string instruction = std::string(data::kSyntheticInstructionPrefix) + word;
    const std::string answer = data::synthetic_answer(word);
    const bool revision = unit(rng) < options.revision_fraction;
    const bool corrupt = unit(rng) < 0.5;
    if (!revision) {
      const std::string target =
          corrupt ? data::synthetic_corrupt(answer, rng, options.task, span) : answer;
      out.push_back({data::make_prompt(instruction), data::make_response(target)});
      continue;
    }
    const std::string embedded =
        corrupt ? data::synthetic_corrupt(answer, rng, options.task, span) : answer;
    const bool better = unit(rng) < 0.5;
    const auto direction =
        better ? rewards::RevisionDirection::kBetter : rewards::RevisionDirection::kWorse;
    const std::string target =
        better ? answer : data::synthetic_corrupt(embedded, rng, options.task, span);
    out.push_back({rewards::render_revision_prompt(instruction, embedded, direction),
                   data::make_response(target)});
  }
  return out;
}

std::vector<double> sft_train(model::TransformerLM& model, std::span<const SftExample> examples,
                              const SftConfig& config,
                              const std::function<void(std::size_t, double)>& on_step) {
  if (config.steps == 0) return {};
  if (examples.empty()) throw ConfigError("sft: no examples");
  if (config.batch_size == 0) throw ConfigError("sft: batch_size must be > 0");
  if (config.warmup_steps >= config.steps) throw ConfigError("sft: warmup_steps >= steps");
  std::vector<Tensor*> params = model.parameter_tensors();
  std::vector<Tensor> grads(params.size());
  std::vector<Tensor*> grad_ptrs(params.size());
  std::vector<const Tensor*> grad_cptrs(params.size());
  AdamWState state;
  std::vector<double> losses;
  losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto idx = data::batch_at(examples.size(), config.batch_size, config.seed,
                                    examples.size() >= config.batch_size, step);
    std::vector<data::SequenceRef> refs;
    for (std::size_t i : idx) refs.push_back({examples[i].prompt, examples[i].response});
    const auto batch = data::pack_sequences(refs);
    Tape tape;
    const auto loss = numerics::scale(numerics::mean(model.response_logprobs(tape, batch)), -1.0);
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor* g = tape.grad_of(*params[i]);
      grads[i] = g ? *g : Tensor::zeros_like(*params[i]);
      grad_ptrs[i] = &grads[i];
      grad_cptrs[i] = &grads[i];
    }
    clip_global_norm(grad_ptrs, config.grad_clip_norm);
    const double lr = learning_rate_at(step, config.steps, config.learning_rate, config.lr_schedule,
                                       config.warmup_steps);
    optimizer_step(params, grad_cptrs, state, lr);
    losses.push_back(loss.value().item());
    if (on_step) on_step(step, losses.back());
  }
  return losses;
}

}  // namespace tokreg::trainer
