// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "tokreg/numerics/ops.hpp"
#include "tokreg/rewards/contrastive.hpp"

namespace tokreg::trainer {
namespace {

using data::PreferencePair;
using model::TransformerLM;
using numerics::Tape;
using numerics::Tensor;

std::vector<double> response_logprobs(const TransformerLM& m, const PreferencePair& pair,
                                      const data::TokenSeq& response) {
  data::TokenSeq seq = pair.prompt;
  seq.insert(seq.end(), response.begin(), response.end());
  return m.forward_logprobs(seq, pair.prompt_len());
}

double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06zu.ckpt", step);
  return buf;
}

// Per-pair inputs that stay fixed for the whole run.
struct PairCache {
  PairTokenRewards ref_logprobs;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
  std::optional<PairTokenRewards> rewards;
};

class Run {
 public:
  Run(const TrainConfig& cfg, const TrainModels& models, std::span<const PreferencePair> train,
      std::span<const PreferencePair> eval, const TrainHooks& hooks)
      : cfg_(cfg), models_(models), train_(train), eval_(eval), hooks_(hooks),
        start_(std::chrono::steady_clock::now()) {}

  TrainRunState run(const TrainRunState* resume) {
    TrainRunState state = resume ? *resume : TrainRunState{};
    const std::size_t n = train_.size();
    const std::size_t total_steps = cfg_.total_steps(n);
    if (total_steps == 0 || state.step >= total_steps) return state;
    const std::size_t warmup = cfg_.resolved_warmup(n);

    if (!cfg_.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg_.checkpoint_dir);
      const auto ref_path = cfg_.checkpoint_dir / "reference.ckpt";
      if (!resume || !std::filesystem::exists(ref_path)) {
        model::save_model(ref_path, *models_.reference);
      }
    }
    prepare();

    std::vector<Tensor*> params = models_.policy->parameter_tensors();
    std::vector<Tensor> grads(params.size());
    std::vector<Tensor*> grad_ptrs(params.size());
    std::vector<const Tensor*> grad_cptrs(params.size());

    for (; state.step < total_steps; ++state.step) {
      const auto idx = data::batch_at(n, cfg_.batch_size, cfg_.seed, cfg_.drop_last, state.step);
      const auto batch = data::pack_pairs(train_, idx);
      std::vector<double> ref_sums(2 * idx.size());
      std::vector<std::string> ids;
      for (std::size_t p = 0; p < idx.size(); ++p) {
        ref_sums[p] = pairs_[idx[p]].ref_chosen;
        ref_sums[p + idx.size()] = pairs_[idx[p]].ref_rejected;
        ids.push_back(train_[idx[p]].id);
      }
      const std::vector<double> rewards = batch_rewards(idx, batch);
      const double lr =
          learning_rate_at(state.step, total_steps, cfg_.learning_rate, cfg_.lr_schedule, warmup);

      StepMetrics metrics;
      try {
        Tape tape;
        const auto loss = losses::batch_loss(tape, *models_.policy,
                                             {&batch, ref_sums, rewards, ids}, cfg_.loss);
        tape.backward(loss.total);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const Tensor* g = tape.grad_of(*params[i]);
          grads[i] = g ? *g : Tensor::zeros_like(*params[i]);
          grad_ptrs[i] = &grads[i];
          grad_cptrs[i] = &grads[i];
        }
        metrics.grad_norm = clip_global_norm(grad_ptrs, cfg_.grad_clip_norm);
        optimizer_step(params, grad_cptrs, state.optimizer, lr, cfg_.adam);
        metrics.mean = losses::mean_breakdown(loss.pairs);
        std::size_t correct = 0;
        for (const auto& p : loss.pairs) correct += p.reward_margin > 0.0 ? 1 : 0;
        metrics.accuracy = static_cast<double>(correct) / static_cast<double>(loss.pairs.size());
      } catch (const DiagnosticError& e) {
        throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(state.step) +
                                  "; last good checkpoint: " +
                                  (state.last_checkpoint.empty() ? std::string("none")
                                                                 : state.last_checkpoint.string()),
                              state.last_checkpoint);
      }
      metrics.step = state.step + 1;
      metrics.lr = lr;
      metrics.wall_time = elapsed();
      state.history.push_back(metrics);
      if (hooks_.metrics_log) {
        nlohmann::json j = metrics;
        *hooks_.metrics_log << j.dump() << '\n';
      }
      if (hooks_.on_step) hooks_.on_step(metrics);

      const std::size_t done = state.step + 1;
      const bool last = done == total_steps;
      if (!eval_.empty() && (last || (cfg_.eval_every && done % cfg_.eval_every == 0))) {
        run_eval(state, done);
      }
      if (!cfg_.checkpoint_dir.empty() &&
          (last || (cfg_.checkpoint_every && done % cfg_.checkpoint_every == 0))) {
        TrainRunState snapshot = state;
        snapshot.step = done;
        const auto path = cfg_.checkpoint_dir / (last ? "final.ckpt" : checkpoint_name(done));
        save_train_checkpoint(path, *models_.policy, snapshot, cfg_);
        state.last_checkpoint = path;
      }
    }
    return state;
  }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  const TransformerLM& evaluator() const {
    return models_.evaluator ? *models_.evaluator : *models_.reference;
  }

  bool precomputed_rewards() const {
    if (!cfg_.loss.regularized()) return false;
    if (cfg_.loss.reward_source == rewards::RewardSource::kContrastive) return !cfg_.strict_rewards;
    return models_.reward_policy != nullptr && !cfg_.strict_rewards;
  }

  PairTokenRewards fixed_rewards(const PreferencePair& pair) const {
    if (cfg_.loss.reward_source == rewards::RewardSource::kContrastive) {
      return contrastive_pair_rewards(evaluator(), pair);
    }
    const double beta = cfg_.loss.beta;
    auto implicit = [&](const data::TokenSeq& response) {
      data::TokenSeq seq = pair.prompt;
      seq.insert(seq.end(), response.begin(), response.end());
      return rewards::dpo_implicit_token_rewards(*models_.reward_policy, *models_.reference, seq,
                                                 pair.prompt_len(), beta)
          .values;
    };
    return {implicit(pair.chosen), implicit(pair.rejected)};
  }

  std::optional<PairTokenRewards> cached(const PreferencePair& pair) const {
    if (!hooks_.cache) return std::nullopt;
    const auto source = cfg_.loss.reward_source;
    const std::string hash = source == rewards::RewardSource::kContrastive
                                 ? evaluator_hash_
                                 : models_.reward_policy->content_hash();
    auto w = hooks_.cache->find(pair.id, rewards::ResponseSide::kChosen, source, hash);
    auto l = hooks_.cache->find(pair.id, rewards::ResponseSide::kRejected, source, hash);
    if (!w || !l) return std::nullopt;
    if (w->size() != pair.chosen.size() || l->size() != pair.rejected.size()) {
      throw DimensionError("reward cache entry for " + pair.id +
                           " does not match the tokenized responses");
    }
    return PairTokenRewards{std::move(w->values), std::move(l->values)};
  }

  void prepare() {
    pairs_.assign(train_.size(), {});
    for (std::size_t i = 0; i < train_.size(); ++i) {
      const PreferencePair& pair = train_[i];
      PairCache& c = pairs_[i];
      c.ref_logprobs.chosen = response_logprobs(*models_.reference, pair, pair.chosen);
      c.ref_logprobs.rejected = response_logprobs(*models_.reference, pair, pair.rejected);
      c.ref_chosen = total(c.ref_logprobs.chosen);
      c.ref_rejected = total(c.ref_logprobs.rejected);
    }
    if (!precomputed_rewards()) return;
    if (hooks_.cache && cfg_.loss.reward_source == rewards::RewardSource::kContrastive) {
      evaluator_hash_ = evaluator().content_hash();
    }
    for (std::size_t i = 0; i < train_.size(); ++i) {
      auto hit = cached(train_[i]);
      pairs_[i].rewards = hit ? std::move(*hit) : fixed_rewards(train_[i]);
    }
  }

  // Token rewards flattened in pack_pairs order, or empty when unregularized.
  std::vector<double> batch_rewards(const std::vector<std::size_t>& idx,
                                    const data::SequenceBatch& batch) const {
    if (!cfg_.loss.regularized()) return {};
    std::vector<double> out;
    out.reserve(batch.response_tokens());
    const bool online = cfg_.loss.reward_source == rewards::RewardSource::kDpoImplicit &&
                        models_.reward_policy == nullptr;
    if (online) {
      const auto lp = models_.policy->batch_logprobs(batch);
      for (std::size_t s = 0; s < batch.batch; ++s) {
        const std::size_t p = s % idx.size();
        const auto& ref = s < idx.size() ? pairs_[idx[p]].ref_logprobs.chosen
                                         : pairs_[idx[p]].ref_logprobs.rejected;
        for (std::size_t t = 0; t < lp[s].size(); ++t) {
          out.push_back(cfg_.loss.beta * (lp[s][t] - ref[t]));
        }
      }
      return out;
    }
    std::vector<PairTokenRewards> fresh;
    if (!precomputed_rewards()) {
      for (std::size_t i : idx) fresh.push_back(fixed_rewards(train_[i]));
    }
    auto get = [&](std::size_t p) -> const PairTokenRewards& {
      return fresh.empty() ? *pairs_[idx[p]].rewards : fresh[p];
    };
    for (std::size_t p = 0; p < idx.size(); ++p) {
      out.insert(out.end(), get(p).chosen.begin(), get(p).chosen.end());
    }
    for (std::size_t p = 0; p < idx.size(); ++p) {
      out.insert(out.end(), get(p).rejected.begin(), get(p).rejected.end());
    }
    for (double r : out) {
      if (!std::isfinite(r) || (cfg_.loss.reward_source == rewards::RewardSource::kContrastive &&
                                (r < -0.5 || r > 0.5))) {
        throw DiagnosticError("token reward out of bounds: " + std::to_string(r));
      }
    }
    return out;
  }

  void run_eval(TrainRunState& state, std::size_t done) {
    EvalMetrics m = evaluate(*models_.policy, *models_.reference, eval_, cfg_.loss,
                             cfg_.eval_batch_size);
    m.step = done;
    state.evals.push_back(m);
    if (hooks_.metrics_log) {
      nlohmann::json j = m;
      *hooks_.metrics_log << j.dump() << '\n';
    }
    if (hooks_.on_eval) hooks_.on_eval(m);
    if (m.accuracy > state.best_accuracy) {
      state.best_accuracy = m.accuracy;
      if (!cfg_.checkpoint_dir.empty()) {
        TrainRunState snapshot = state;
        snapshot.step = done;
        state.best_checkpoint = cfg_.checkpoint_dir / "best.ckpt";
        save_train_checkpoint(state.best_checkpoint, *models_.policy, snapshot, cfg_);
      }
    }
  }

  const TrainConfig& cfg_;
  const TrainModels& models_;
  std::span<const PreferencePair> train_;
  std::span<const PreferencePair> eval_;
  const TrainHooks& hooks_;
  std::chrono::steady_clock::time_point start_;
  std::vector<PairCache> pairs_;
  std::string evaluator_hash_;
};

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be > 0");
  if (eval_batch_size == 0) throw ConfigError("train.eval_batch_size must be > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be > 0");
  }
  if (warmup_steps < -1) throw ConfigError("train.warmup_steps must be >= 0 (or -1 for 10%)");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("train.grad_clip_norm must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.adam.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.adam.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.adam.eps must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("train.adam.weight_decay must be >= 0");
}

std::size_t TrainConfig::total_steps(std::size_t n_pairs) const {
  std::size_t steps = epochs * data::batches_per_epoch(n_pairs, batch_size, drop_last);
  if (max_steps > 0) steps = std::min(steps, max_steps);
  return steps;
}

std::size_t TrainConfig::resolved_warmup(std::size_t n_pairs) const {
  const std::size_t steps = total_steps(n_pairs);
  const std::size_t warmup =
      warmup_steps < 0 ? steps / 10 : static_cast<std::size_t>(warmup_steps);
  if (steps > 0 && warmup >= steps) {
    throw ConfigError("train.warmup_steps (" + std::to_string(warmup) +
                      ") must be below the total step count (" + std::to_string(steps) + ")");
  }
  return warmup;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"loss", c.loss},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"lr_schedule", schedule_name(c.lr_schedule)},
       {"warmup_steps", c.warmup_steps},
       {"grad_clip_norm", c.grad_clip_norm},
       {"adam",
        {{"beta1", c.adam.beta1},
         {"beta2", c.adam.beta2},
         {"eps", c.adam.eps},
         {"weight_decay", c.adam.weight_decay}}},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"eval_batch_size", c.eval_batch_size},
       {"checkpoint_every", c.checkpoint_every},
       {"checkpoint_dir", c.checkpoint_dir.string()},
       {"drop_last", c.drop_last},
       {"strict_rewards", c.strict_rewards}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "loss") {
        c.loss = value.get<losses::LossConfig>();
      } else if (key == "epochs") {
        c.epochs = value.get<std::size_t>();
      } else if (key == "max_steps") {
        c.max_steps = value.get<std::size_t>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<std::size_t>();
      } else if (key == "learning_rate") {
        c.learning_rate = value.get<double>();
      } else if (key == "lr_schedule") {
        c.lr_schedule = schedule_from_name(value.get<std::string>());
      } else if (key == "warmup_steps") {
        c.warmup_steps = value.get<long>();
      } else if (key == "grad_clip_norm") {
        c.grad_clip_norm = value.get<double>();
      } else if (key == "adam") {
        for (const auto& [k, v] : value.items()) {
          if (k == "beta1") {
            c.adam.beta1 = v.get<double>();
          } else if (k == "beta2") {
            c.adam.beta2 = v.get<double>();
          } else if (k == "eps") {
            c.adam.eps = v.get<double>();
          } else if (k == "weight_decay") {
            c.adam.weight_decay = v.get<double>();
          } else {
            throw ConfigError("train.adam." + k + ": unknown field");
          }
        }
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "eval_every") {
        c.eval_every = value.get<std::size_t>();
      } else if (key == "eval_batch_size") {
        c.eval_batch_size = value.get<std::size_t>();
      } else if (key == "checkpoint_every") {
        c.checkpoint_every = value.get<std::size_t>();
      } else if (key == "checkpoint_dir") {
        c.checkpoint_dir = value.get<std::string>();
      } else if (key == "drop_last") {
        c.drop_last = value.get<bool>();
      } else if (key == "strict_rewards") {
        c.strict_rewards = value.get<bool>();
      } else {
        throw ConfigError("train." + key + ": unknown field");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("train." + key + ": wrong type");
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      if (what.rfind("train.", 0) == 0) throw;
      throw ConfigError("train." + what);
    }
  }
}

void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = {{"type", "step"},
       {"step", m.step},
       {"loss", m.mean.total},
       {"base_loss", m.mean.base_loss},
       {"reg_loss_w", m.mean.reg_loss_w},
       {"reg_loss_l", m.mean.reg_loss_l},
       {"weight", m.mean.weight},
       {"sft_loss", m.mean.sft_loss},
       {"reward_margin", m.mean.reward_margin},
       {"accuracy", m.accuracy},
       {"lr", m.lr},
       {"grad_norm", m.grad_norm},
       {"wall_time", m.wall_time}};
}

void to_json(nlohmann::json& j, const EvalMetrics& m) {
  j = {{"type", "eval"},    {"step", m.step},         {"pairs", m.pairs},
       {"loss", m.loss},    {"accuracy", m.accuracy}, {"reward_margin", m.margin}};
  if (m.credit) j["credit"] = *m.credit;
}

PairTokenRewards contrastive_pair_rewards(const TransformerLM& evaluator,
                                          const PreferencePair& pair) {
  const std::string instruction = data::decode(pair.prompt);
  PairTokenRewards r;
  r.chosen = rewards::score_answer(evaluator, instruction, data::decode(pair.chosen)).values;
  r.rejected = rewards::score_answer(evaluator, instruction, data::decode(pair.rejected)).values;
  if (r.chosen.size() != pair.chosen.size() || r.rejected.size() != pair.rejected.size()) {
    throw DimensionError("contrastive rewards for " + pair.id +
                         " do not align with the tokenized responses");
  }
  return r;
}

TrainRunState train(const TrainConfig& config, const TrainModels& models,
                    std::span<const PreferencePair> train_pairs,
                    std::span<const PreferencePair> eval_pairs, const TrainHooks& hooks,
                    const TrainRunState* resume) {
  config.validate();
  if (!models.policy || models.policy->frozen()) {
    throw ConfigError("train: a trainable policy is required");
  }
  if (!models.reference || !models.reference->frozen()) {
    throw ConfigError("train: the reference must be a frozen model");
  }
  rewards::require_shared_vocabulary(*models.policy, *models.reference);
  if (models.evaluator) rewards::require_shared_vocabulary(*models.policy, *models.evaluator);
  if (models.reward_policy) {
    rewards::require_shared_vocabulary(*models.policy, *models.reward_policy);
  }
  Run run(config, models, train_pairs, eval_pairs, hooks);
  return run.run(resume);
}

EvalMetrics evaluate(const TransformerLM& policy, const TransformerLM& reference,
                     std::span<const PreferencePair> pairs, const losses::LossConfig& cfg,
                     std::size_t batch_size) {
  cfg.validate();
  rewards::require_shared_vocabulary(policy, reference);
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be > 0");
  EvalMetrics m;
  m.pairs = pairs.size();
  if (pairs.empty()) return m;

  bool planted = true;
  for (const auto& p : pairs) planted = planted && p.planted_span.has_value();
  std::vector<std::vector<double>> rejected_rewards;
  std::vector<data::Span> spans;

  double loss_sum = 0.0, margin_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch_size); ++i) {
      idx.push_back(i);
    }
    const auto batch = data::pack_pairs(pairs, idx);
    const auto lp = policy.batch_logprobs(batch);
    const auto ref = reference.batch_logprobs(batch);
    const std::size_t n = idx.size();
    for (std::size_t p = 0; p < n; ++p) {
      const double sw = total(lp[p]), sl = total(lp[p + n]);
      const double margin = cfg.beta * ((sw - total(ref[p])) - (sl - total(ref[p + n])));
      double z = margin;
      if (cfg.base == losses::BaseObjective::kSimpo) {
        z = cfg.beta * (sw / static_cast<double>(lp[p].size()) -
                        sl / static_cast<double>(lp[p + n].size())) -
            cfg.simpo_gamma;
      }
      loss_sum += -numerics::stable_log_sigmoid(z);
      margin_sum += margin;
      correct += margin > 0.0 ? 1 : 0;
      if (planted) {
        std::vector<double> r(lp[p + n].size());
        for (std::size_t t = 0; t < r.size(); ++t) r[t] = cfg.beta * (lp[p + n][t] - ref[p + n][t]);
        rejected_rewards.push_back(std::move(r));
        spans.push_back(*pairs[idx[p]].planted_span);
      }
    }
  }
  const double count = static_cast<double>(pairs.size());
  m.loss = loss_sum / count;
  m.margin = margin_sum / count;
  m.accuracy = static_cast<double>(correct) / count;
  if (planted) m.credit = diagnostics::credit_metrics_from_rewards(rejected_rewards, spans);
  return m;
}

void save_train_checkpoint(const std::filesystem::path& path, const TransformerLM& policy,
                           const TrainRunState& state, const TrainConfig& config) {
  model::Checkpoint c = model::make_checkpoint(policy);
  c.step = state.step;
  c.rng_state = "seed=" + std::to_string(config.seed) + ";step=" + std::to_string(state.step);
  c.metadata = {{"train_config", config},
                {"adam_step", state.optimizer.step},
                {"best_accuracy", state.best_accuracy},
                {"best_checkpoint", state.best_checkpoint.string()}};
  const auto& params = policy.parameters();
  if (!state.optimizer.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.extra.push_back({"adam.m." + params[i].name, state.optimizer.m[i]});
      c.extra.push_back({"adam.v." + params[i].name, state.optimizer.v[i]});
    }
  }
  model::save_checkpoint(path, c);
}

ResumePoint load_train_checkpoint(const std::filesystem::path& path) {
  model::Checkpoint c = model::load_checkpoint(path);
  if (c.role != model::ModelRole::kPolicy) {
    throw ConfigError("resume: " + path.string() + " does not hold a policy");
  }
  TrainRunState state;
  state.step = c.step;
  try {
    state.optimizer.step = c.metadata.at("adam_step").get<std::size_t>();
    state.best_accuracy = c.metadata.value("best_accuracy", -1.0);
    state.best_checkpoint = c.metadata.value("best_checkpoint", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("resume: " + path.string() + ": " + e.what());
  }
  state.last_checkpoint = path;
  if (!c.extra.empty()) {
    if (c.extra.size() != 2 * c.params.size()) {
      throw ParseError("resume: " + path.string() + " has incomplete optimizer state");
    }
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      const auto& m = c.extra[2 * i];
      const auto& v = c.extra[2 * i + 1];
      if (m.name != "adam.m." + c.params[i].name || v.name != "adam.v." + c.params[i].name ||
          m.tensor.shape() != c.params[i].tensor.shape() ||
          v.tensor.shape() != c.params[i].tensor.shape()) {
        throw ParseError("resume: optimizer state does not match parameter " + c.params[i].name);
      }
      state.optimizer.m.push_back(m.tensor);
      state.optimizer.v.push_back(v.tensor);
    }
  }
  return {c.to_model(), std::move(state)};
}

}  // namespace tokreg::trainer
