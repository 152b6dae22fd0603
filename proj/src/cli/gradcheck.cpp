// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/cli/gradcheck.hpp"

#include <optional>
#include <random>
#include <span>

#include "tokreg/data/synthetic.hpp"
#include "tokreg/losses/losses.hpp"
#include "tokreg/numerics/grad_check.hpp"

namespace tokreg::cli {

std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  data::SyntheticTaskOptions task;
  task.word_length = 3;
  const auto records = data::make_synthetic_planted_task(options.pairs, options.seed, task);
  const auto pairs =
      data::tokenize_records(records, static_cast<std::size_t>(options.model.context_len));

  model::TransformerLM policy(options.model);
  // A reference that differs from the policy keeps every log-ratio nonzero.
  model::ModelConfig ref_cfg = options.model;
  ref_cfg.seed += 1;
  const model::TransformerLM reference = model::TransformerLM(ref_cfg).freeze_copy();

  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = data::pack_pairs(pairs, idx);
  const auto ref_lp = losses::reference_seq_logprobs(reference, batch);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> reward(-0.5, 0.5);
  std::vector<double> token_rewards(batch.response_tokens());
  for (double& r : token_rewards) r = reward(rng);

  std::vector<numerics::Tensor*> params = policy.parameter_tensors();
  numerics::GradCheckOptions gc;
  gc.max_coords_per_tensor = options.max_coords_per_tensor;
  gc.seed = options.seed;
  gc.eps = options.eps;
  gc.order = options.order;

  // The sequence weight is detached, so it is held at its value at the
  // unperturbed parameters while the loss is differenced.
  auto batch_variant = [&](losses::LossConfig cfg) {
    std::vector<double> weights;
    if (cfg.weighting == losses::Weighting::kSequence) {
      numerics::Tape probe;
      for (const auto& p :
           losses::batch_loss(probe, policy, {&batch, ref_lp, token_rewards, {}}, cfg).pairs) {
        weights.push_back(p.weight);
      }
    }
    return [&, cfg, weights](numerics::Tape& tape) {
      std::optional<std::span<const double>> fixed;
      if (!weights.empty()) fixed = std::span<const double>(weights);
      return losses::batch_loss(tape, policy, {&batch, ref_lp, token_rewards, {}}, cfg, fixed)
          .total;
    };
  };
  losses::LossConfig dpo;
  dpo.regularize = losses::Regularize::kOff;
  losses::LossConfig simpo = dpo;
  simpo.base = losses::BaseObjective::kSimpo;
  simpo.beta = 2.0;
  simpo.simpo_gamma = 0.5;
  losses::LossConfig treg;
  treg.alpha = 0.5;
  losses::LossConfig treg_static = treg;
  treg_static.weighting = losses::Weighting::kStatic;
  losses::LossConfig dpo_sft = dpo;
  dpo_sft.sft_coeff = 0.5;

  const auto& first = pairs.front();
  data::TokenSeq reg_tokens = first.prompt;
  reg_tokens.insert(reg_tokens.end(), first.rejected.begin(), first.rejected.end());
  const std::vector<double> reg_rewards(token_rewards.begin(),
                                        token_rewards.begin() + first.rejected.size());

  const std::vector<std::pair<std::string, numerics::LossBuilder>> suite = {
      {"dpo", batch_variant(dpo)},
      {"simpo", batch_variant(simpo)},
      {"reg",
       [&](numerics::Tape& tape) {
         return losses::reg_loss(tape, policy, reg_tokens, first.prompt_len(), reg_rewards, 0.1);
       }},
      {"treg", batch_variant(treg)},
      {"treg_static", batch_variant(treg_static)},
      {"dpo_sft", batch_variant(dpo_sft)},
  };
  std::vector<GradCheckRow> rows;
  for (const auto& [name, builder] : suite) {
    const auto report = numerics::grad_check(builder, params, gc);
    rows.push_back({name, report.max_rel_error, report.analytic, report.numeric, report.checked,
                    report.max_rel_error < options.tolerance});
  }
  return rows;
}

}  // namespace tokreg::cli
