// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/losses/losses.hpp"

#include <cmath>

#include "tokreg/errors.hpp"
#include "tokreg/numerics/ops.hpp"

namespace tokreg::losses {
namespace {

namespace ops = numerics;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

Var constant_vector(Tape& tape, std::vector<double> values) {
  return tape.constant(Tensor::vector(std::move(values)));
}

data::SequenceBatch single_pair_batch(const data::PreferencePair& pair) {
  const std::size_t index = 0;
  return data::pack_pairs(std::span(&pair, 1), std::span(&index, 1));
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

std::string_view base_name(BaseObjective base) noexcept {
  return base == BaseObjective::kDpo ? "dpo" : "simpo";
}

BaseObjective base_from_name(std::string_view name) {
  if (name == "dpo") return BaseObjective::kDpo;
  if (name == "simpo") return BaseObjective::kSimpo;
  throw ConfigError("loss.base: unknown objective \"" + std::string(name) +
                    "\" (expected dpo or simpo)");
}

std::string_view weighting_name(Weighting weighting) noexcept {
  return weighting == Weighting::kSequence ? "sequence" : "static";
}

Weighting weighting_from_name(std::string_view name) {
  if (name == "sequence") return Weighting::kSequence;
  if (name == "static") return Weighting::kStatic;
  throw ConfigError("loss.weighting: unknown weighting \"" + std::string(name) +
                    "\" (expected sequence or static)");
}

std::string_view regularize_name(Regularize regularize) noexcept {
  switch (regularize) {
    case Regularize::kBothOutputs:
      return "both_outputs";
    case Regularize::kChosenOnly:
      return "chosen_only";
    case Regularize::kOff:
      break;
  }
  return "off";
}

Regularize regularize_from_name(std::string_view name) {
  if (name == "both_outputs") return Regularize::kBothOutputs;
  if (name == "chosen_only") return Regularize::kChosenOnly;
  if (name == "off") return Regularize::kOff;
  throw ConfigError("loss.regularize: unknown mode \"" + std::string(name) +
                    "\" (expected both_outputs, chosen_only or off)");
}

void LossConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("loss.beta must be > 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("loss.alpha must be >= 0");
  if (!(sft_coeff >= 0.0) || !std::isfinite(sft_coeff)) {
    throw ConfigError("loss.sft_coeff must be >= 0");
  }
  if (!(simpo_gamma >= 0.0) || !std::isfinite(simpo_gamma)) {
    throw ConfigError("loss.simpo_gamma must be >= 0");
  }
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"beta", c.beta},
       {"alpha", c.alpha},
       {"base", base_name(c.base)},
       {"weighting", weighting_name(c.weighting)},
       {"reward_source", rewards::source_name(c.reward_source)},
       {"regularize", regularize_name(c.regularize)},
       {"sft_coeff", c.sft_coeff},
       {"simpo_gamma", c.simpo_gamma}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  if (!j.is_object()) throw ConfigError("loss: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "beta") {
        c.beta = value.get<double>();
      } else if (key == "alpha") {
        c.alpha = value.get<double>();
      } else if (key == "base") {
        c.base = base_from_name(value.get<std::string>());
      } else if (key == "weighting") {
        c.weighting = weighting_from_name(value.get<std::string>());
      } else if (key == "reward_source") {
        c.reward_source = rewards::source_from_name(value.get<std::string>());
      } else if (key == "regularize") {
        c.regularize = regularize_from_name(value.get<std::string>());
      } else if (key == "sft_coeff") {
        c.sft_coeff = value.get<double>();
      } else if (key == "simpo_gamma") {
        c.simpo_gamma = value.get<double>();
      } else {
        throw ConfigError("loss." + key + ": unknown field");
      }
    } catch (const nlohmann::json::type_error&) {
      throw ConfigError("loss." + key + ": wrong type");
    }
  }
}

BatchLoss batch_loss(Tape& tape, const model::TransformerLM& policy, const PairBatch& inputs,
                     const LossConfig& cfg, std::optional<std::span<const double>> weight_override) {
  if (inputs.batch == nullptr) throw DimensionError("batch_loss: no batch");
  const data::SequenceBatch& b = *inputs.batch;
  if (b.batch == 0 || b.batch % 2 != 0) {
    throw DimensionError("batch_loss: pair batch needs an even, nonzero sequence count, got " +
                         std::to_string(b.batch));
  }
  const std::size_t n_pairs = b.batch / 2;
  const std::size_t n_tokens = b.response_tokens();
  const bool has_ref = !inputs.ref_seq_logprobs.empty();
  if (has_ref && inputs.ref_seq_logprobs.size() != b.batch) {
    throw DimensionError("batch_loss: " + std::to_string(inputs.ref_seq_logprobs.size()) +
                         " reference log-probs for " + std::to_string(b.batch) + " sequences");
  }
  if (cfg.base == BaseObjective::kDpo && !has_ref) {
    throw DimensionError("batch_loss: dpo needs reference log-probs");
  }
  if (!inputs.ids.empty() && inputs.ids.size() != n_pairs) {
    throw DimensionError("batch_loss: id count does not match pair count");
  }
  const bool regularized = cfg.regularized();
  if (regularized && inputs.token_rewards.size() != n_tokens) {
    throw DimensionError("batch_loss: " + std::to_string(inputs.token_rewards.size()) +
                         " token rewards for " + std::to_string(n_tokens) + " response tokens");
  }
  if (weight_override && weight_override->size() != n_pairs) {
    throw DimensionError("batch_loss: weight override needs one value per pair");
  }
  auto pair_label = [&](std::size_t p) {
    return inputs.ids.empty() ? "pair " + std::to_string(p) : "record " + inputs.ids[p];
  };

  std::vector<std::size_t> seq_of(n_tokens);
  std::vector<double> ones(n_tokens, 1.0);
  std::vector<double> inv_len(n_tokens);
  for (std::size_t s = 0; s < b.batch; ++s) {
    const std::size_t len = b.response_length(s);
    if (cfg.base == BaseObjective::kSimpo && len == 0) {
      throw LengthError("simpo: empty response in " + pair_label(s % n_pairs));
    }
    for (std::size_t i = b.response_offsets[s]; i < b.response_offsets[s + 1]; ++i) {
      seq_of[i] = s;
      inv_len[i] = 1.0 / static_cast<double>(len);
    }
  }
  std::vector<std::size_t> pair_of_seq(b.batch);
  std::vector<double> pair_sign(b.batch);
  for (std::size_t s = 0; s < b.batch; ++s) {
    pair_of_seq[s] = s % n_pairs;
    pair_sign[s] = s < n_pairs ? 1.0 : -1.0;
  }

  const Var lp = policy.response_logprobs(tape, b);

  // Base logit z per pair.
  Var z;
  if (cfg.base == BaseObjective::kDpo) {
    const Var sums = ops::segment_sum(lp, seq_of, ones, b.batch);
    const Var ratios = ops::sub(
        sums, constant_vector(tape, {inputs.ref_seq_logprobs.begin(),
                                     inputs.ref_seq_logprobs.end()}));
    z = ops::scale(ops::segment_sum(ratios, pair_of_seq, pair_sign, n_pairs), cfg.beta);
  } else {
    const Var avgs = ops::segment_sum(lp, seq_of, inv_len, b.batch);
    z = ops::sub(ops::scale(ops::segment_sum(avgs, pair_of_seq, pair_sign, n_pairs), cfg.beta),
                 constant_vector(tape, std::vector<double>(n_pairs, cfg.simpo_gamma)));
  }
  const Var base = ops::scale(ops::log_sigmoid(z), -1.0);
  Var total = ops::mean(base);

  const Tensor& lpv = lp.value();
  std::vector<double> seq_sum(b.batch, 0.0);
  for (std::size_t i = 0; i < n_tokens; ++i) seq_sum[seq_of[i]] += lpv[i];

  BatchLoss out;
  out.pairs.resize(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairLossBreakdown& br = out.pairs[p];
    br.base_loss = base.value()[p];
    br.sft_loss = -seq_sum[p];
    if (cfg.weighting == Weighting::kStatic) {
      br.weight = 1.0;
    } else {
      br.weight = ops::stable_sigmoid(-z.value()[p]);
    }
    if (has_ref) {
      br.reward_margin = cfg.beta * ((seq_sum[p] - inputs.ref_seq_logprobs[p]) -
                                     (seq_sum[p + n_pairs] - inputs.ref_seq_logprobs[p + n_pairs]));
    } else {
      const double avg_w = seq_sum[p] / static_cast<double>(b.response_length(p));
      const double avg_l = seq_sum[p + n_pairs] / static_cast<double>(b.response_length(p + n_pairs));
      br.reward_margin = cfg.beta * (avg_w - avg_l);
    }
  }

  if (regularized) {
    std::vector<double> reg_weights(n_tokens);
    for (std::size_t i = 0; i < n_tokens; ++i) {
      reg_weights[i] = -cfg.beta * inputs.token_rewards[i];
    }
    const Var reg_seq = ops::segment_sum(lp, seq_of, reg_weights, b.batch);
    std::vector<double> side_weight(b.batch, 1.0);
    if (cfg.regularize == Regularize::kChosenOnly) {
      for (std::size_t s = n_pairs; s < b.batch; ++s) side_weight[s] = 0.0;
    }
    const Var reg_pair = ops::segment_sum(reg_seq, pair_of_seq, side_weight, n_pairs);

    Var w;
    if (weight_override) {
      w = constant_vector(tape, {weight_override->begin(), weight_override->end()});
    } else if (cfg.weighting == Weighting::kStatic) {
      w = constant_vector(tape, std::vector<double>(n_pairs, 1.0));
    } else {
      w = ops::detach(ops::sigmoid(ops::scale(z, -1.0)));
    }
    total = ops::add(total, ops::scale(ops::mean(ops::mul(w, reg_pair)), cfg.alpha));

    for (std::size_t p = 0; p < n_pairs; ++p) {
      PairLossBreakdown& br = out.pairs[p];
      br.weight = w.value()[p];
      br.reg_loss_w = reg_seq.value()[p];
      br.reg_loss_l = side_weight[p + n_pairs] * reg_seq.value()[p + n_pairs];
    }
  }

  if (cfg.sft_coeff != 0.0) {
    std::vector<std::size_t> chosen_pair(n_tokens, ops::kNoSegment);
    for (std::size_t i = 0; i < n_tokens; ++i) {
      if (seq_of[i] < n_pairs) chosen_pair[i] = seq_of[i];
    }
    const std::vector<double> minus_one(n_tokens, -1.0);
    const Var nll = ops::segment_sum(lp, chosen_pair, minus_one, n_pairs);
    total = ops::add(total, ops::scale(ops::mean(nll), cfg.sft_coeff));
  }

  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairLossBreakdown& br = out.pairs[p];
    br.total = br.base_loss;
    if (regularized) br.total += cfg.alpha * br.weight * (br.reg_loss_w + br.reg_loss_l);
    if (cfg.sft_coeff != 0.0) br.total += cfg.sft_coeff * br.sft_loss;
    if (!std::isfinite(br.total) || !std::isfinite(br.reward_margin)) {
      throw DiagnosticError("non-finite loss for " + pair_label(p));
    }
  }
  out.total = total;
  return out;
}

PairLossBreakdown mean_breakdown(std::span<const PairLossBreakdown> pairs) {
  PairLossBreakdown m;
  if (pairs.empty()) return m;
  for (const auto& p : pairs) {
    m.base_loss += p.base_loss;
    m.reg_loss_w += p.reg_loss_w;
    m.reg_loss_l += p.reg_loss_l;
    m.weight += p.weight;
    m.sft_loss += p.sft_loss;
    m.total += p.total;
    m.reward_margin += p.reward_margin;
  }
  const double n = static_cast<double>(pairs.size());
  m.base_loss /= n;
  m.reg_loss_w /= n;
  m.reg_loss_l /= n;
  m.weight /= n;
  m.sft_loss /= n;
  m.total /= n;
  m.reward_margin /= n;
  return m;
}

std::vector<double> reference_seq_logprobs(const model::TransformerLM& reference,
                                           const data::SequenceBatch& batch) {
  std::vector<double> out;
  out.reserve(batch.batch);
  for (const auto& lp : reference.batch_logprobs(batch)) {
    double s = 0.0;
    for (double v : lp) s += v;
    out.push_back(s);
  }
  return out;
}

DpoResult dpo_loss(const model::TransformerLM& policy, const model::TransformerLM& reference,
                   const data::PreferencePair& pair, double beta) {
  LossConfig cfg;
  cfg.beta = beta;
  cfg.regularize = Regularize::kOff;
  cfg.validate();
  const auto batch = single_pair_batch(pair);
  const auto ref = reference_seq_logprobs(reference, batch);
  Tape tape(Tape::Mode::kInference);
  const BatchLoss r = batch_loss(tape, policy, {&batch, ref, {}, std::span(&pair.id, 1)}, cfg);
  return {r.pairs[0].base_loss, r.pairs[0].reward_margin};
}

double simpo_loss(const model::TransformerLM& policy, const data::PreferencePair& pair, double beta,
                  double gamma) {
  LossConfig cfg;
  cfg.beta = beta;
  cfg.base = BaseObjective::kSimpo;
  cfg.simpo_gamma = gamma;
  cfg.regularize = Regularize::kOff;
  cfg.validate();
  const auto batch = single_pair_batch(pair);
  Tape tape(Tape::Mode::kInference);
  return batch_loss(tape, policy, {&batch, {}, {}, std::span(&pair.id, 1)}, cfg)
      .pairs[0]
      .base_loss;
}

Var reg_loss(Tape& tape, const model::TransformerLM& policy, std::span<const int> tokens,
             std::size_t prompt_len, std::span<const double> rewards, double beta) {
  if (prompt_len == 0 || prompt_len > tokens.size()) {
    throw LengthError("reg_loss: prompt length " + std::to_string(prompt_len) + " invalid for " +
                      std::to_string(tokens.size()) + " tokens");
  }
  if (rewards.size() != tokens.size() - prompt_len) {
    throw DimensionError("reg_loss: " + std::to_string(rewards.size()) + " rewards for " +
                         std::to_string(tokens.size() - prompt_len) + " response tokens");
  }
  const data::SequenceRef ref{tokens.first(prompt_len), tokens.subspan(prompt_len)};
  const auto batch = data::pack_sequences(std::span(&ref, 1));
  const Var lp = policy.response_logprobs(tape, batch);
  std::vector<double> weights(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) weights[i] = -beta * rewards[i];
  const std::vector<std::size_t> segment(rewards.size(), 0);
  return ops::sum(ops::segment_sum(lp, segment, weights, 1));
}

double reg_loss(const model::TransformerLM& policy, std::span<const int> tokens,
                std::size_t prompt_len, const rewards::TokenRewardVector& rewards, double beta) {
  if (!(beta > 0.0)) throw ConfigError("reg_loss: beta must be > 0");
  Tape tape(Tape::Mode::kInference);
  return reg_loss(tape, policy, tokens, prompt_len, rewards.values, beta).value().item();
}

double sequence_weight(const model::TransformerLM& policy, const model::TransformerLM& reference,
                       const data::PreferencePair& pair, double beta) {
  return ops::stable_sigmoid(-dpo_loss(policy, reference, pair, beta).reward_margin);
}

PairLossBreakdown treg_loss(const model::TransformerLM& policy,
                            const model::TransformerLM& reference,
                            const rewards::TokenRewardVector& rewards_w,
                            const rewards::TokenRewardVector& rewards_l,
                            const data::PreferencePair& pair, const LossConfig& cfg) {
  cfg.validate();
  const auto batch = single_pair_batch(pair);
  const auto ref = reference_seq_logprobs(reference, batch);
  const auto token_rewards = concat(rewards_w.values, rewards_l.values);
  Tape tape(Tape::Mode::kInference);
  return batch_loss(tape, policy, {&batch, ref, token_rewards, std::span(&pair.id, 1)}, cfg)
      .pairs[0];
}

double dpo_sft_loss(const model::TransformerLM& policy, const model::TransformerLM& reference,
                    const data::PreferencePair& pair, double beta, double sft_coeff) {
  LossConfig cfg;
  cfg.beta = beta;
  cfg.regularize = Regularize::kOff;
  cfg.sft_coeff = sft_coeff;
  cfg.validate();
  const auto batch = single_pair_batch(pair);
  const auto ref = reference_seq_logprobs(reference, batch);
  Tape tape(Tape::Mode::kInference);
  return batch_loss(tape, policy, {&batch, ref, {}, std::span(&pair.id, 1)}, cfg).pairs[0].total;
}

}  // namespace tokreg::losses
