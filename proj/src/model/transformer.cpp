// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "tokreg/errors.hpp"
#include "tokreg/numerics/ops.hpp"

namespace tokreg::model {

namespace ops = numerics;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("model.") + field + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(context_len, "context_len");
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  if (d_model % n_heads != 0) {
    throw ConfigError("model.d_model (" + std::to_string(d_model) +
                      ") must be divisible by model.n_heads (" + std::to_string(n_heads) + ")");
  }
  if (vocab_size < data::kVocabSize) {
    throw ConfigError("model.vocab_size must be at least " + std::to_string(data::kVocabSize) +
                      " to cover the tokenizer");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"context_len", c.context_len}, {"d_model", c.d_model},
       {"n_layers", c.n_layers},     {"n_heads", c.n_heads},         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.context_len = j.value("context_len", d.context_len);
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.seed = j.value("seed", d.seed);
}

std::string_view role_name(ModelRole role) noexcept {
  switch (role) {
    case ModelRole::kPolicy: return "policy";
    case ModelRole::kReference: return "reference";
    case ModelRole::kEvaluator: return "evaluator";
  }
  return "policy";
}

ModelRole role_from_name(std::string_view name) {
  if (name == "policy") return ModelRole::kPolicy;
  if (name == "reference") return ModelRole::kReference;
  if (name == "evaluator") return ModelRole::kEvaluator;
  throw ConfigError("unknown model role \"" + std::string(name) + "\"");
}

TransformerLM::TransformerLM(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto v = static_cast<std::size_t>(config_.vocab_size);
  const auto ctx = static_cast<std::size_t>(config_.context_len);
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.n_layers);

  auto add = [&](std::string name, Shape shape, double init_scale, double constant = 0.0) {
    Tensor t(std::move(shape));
    for (double& x : t.data()) x = init_scale > 0.0 ? init_scale * normal(rng) : constant;
    t.set_requires_grad(true);
    params_.push_back({std::move(name), std::move(t)});
  };

  add("tok_emb", {v, d}, 1.0);
  add("pos_emb", {ctx, d}, 1.0);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    add(p + "ln1.gamma", {d}, 0.0, 1.0);
    add(p + "ln1.beta", {d}, 0.0);
    add(p + "attn.qkv.weight", {d, 3 * d}, 1.0);
    add(p + "attn.qkv.bias", {3 * d}, 0.0);
    add(p + "attn.out.weight", {d, d}, residual_scale);
    add(p + "attn.out.bias", {d}, 0.0);
    add(p + "ln2.gamma", {d}, 0.0, 1.0);
    add(p + "ln2.beta", {d}, 0.0);
    add(p + "mlp.fc.weight", {d, 4 * d}, 1.0);
    add(p + "mlp.fc.bias", {4 * d}, 0.0);
    add(p + "mlp.proj.weight", {4 * d, d}, residual_scale);
    add(p + "mlp.proj.bias", {d}, 0.0);
  }
  add("ln_f.gamma", {d}, 0.0, 1.0);
  add("ln_f.beta", {d}, 0.0);
  add("head.weight", {d, v}, 1.0);
  index_parameters();
}

TransformerLM::TransformerLM(const ModelConfig& config, std::vector<NamedTensor> params,
                             ModelRole role)
    : config_(config), role_(role), params_(std::move(params)) {
  config_.validate();
  TransformerLM layout(config_);
  if (layout.params_.size() != params_.size()) {
    throw ConfigError("parameter count " + std::to_string(params_.size()) +
                      " does not match the configured architecture");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != layout.params_[i].name ||
        params_[i].tensor.shape() != layout.params_[i].tensor.shape()) {
      throw ConfigError("parameter " + params_[i].name + " " +
                        numerics::shape_to_string(params_[i].tensor.shape()) +
                        " does not match expected " + layout.params_[i].name + " " +
                        numerics::shape_to_string(layout.params_[i].tensor.shape()));
    }
    params_[i].tensor.set_requires_grad(!frozen());
  }
  index_parameters();
}

void TransformerLM::index_parameters() {
  auto find = [this](std::string_view name) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    throw ConfigError("missing parameter " + std::string(name));
  };
  tok_emb_ = find("tok_emb");
  pos_emb_ = find("pos_emb");
  lnf_g_ = find("ln_f.gamma");
  lnf_b_ = find("ln_f.beta");
  head_ = find("head.weight");
  blocks_.clear();
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    blocks_.push_back({find(p + "ln1.gamma"), find(p + "ln1.beta"), find(p + "attn.qkv.weight"),
                       find(p + "attn.qkv.bias"), find(p + "attn.out.weight"),
                       find(p + "attn.out.bias"), find(p + "ln2.gamma"), find(p + "ln2.beta"),
                       find(p + "mlp.fc.weight"), find(p + "mlp.fc.bias"),
                       find(p + "mlp.proj.weight"), find(p + "mlp.proj.bias")});
  }
}

std::vector<NamedTensor>& TransformerLM::mutable_parameters() {
  if (frozen()) {
    throw std::logic_error("attempt to modify a frozen " + std::string(role_name(role_)) +
                           " model");
  }
  return params_;
}

std::vector<Tensor*> TransformerLM::parameter_tensors() {
  std::vector<Tensor*> out;
  for (auto& p : mutable_parameters()) out.push_back(&p.tensor);
  return out;
}

std::size_t TransformerLM::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

const Tensor& TransformerLM::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("no parameter named " + std::string(name));
}

Var TransformerLM::bind(Tape& tape, std::size_t index) const {
  return tape.parameter(params_[index].tensor);
}

void TransformerLM::check_lengths(const data::SequenceBatch& batch) const {
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.lengths[b] > static_cast<std::size_t>(config_.context_len)) {
      throw LengthError("sequence of " + std::to_string(batch.lengths[b]) +
                        " tokens exceeds context length " + std::to_string(config_.context_len));
    }
    if (batch.prompt_lens[b] == 0) throw LengthError("sequence has an empty prompt");
  }
}

Var TransformerLM::trunk(Tape& tape, const data::SequenceBatch& batch) const {
  const std::size_t rows = batch.batch * batch.seq_len;
  // Padding beyond the context is never read by valid positions; clamp its ids.
  std::vector<int> positions(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    positions[r] = static_cast<int>(
        std::min<std::size_t>(r % batch.seq_len, static_cast<std::size_t>(config_.context_len - 1)));
  }
  Var x = ops::add(ops::embedding(bind(tape, tok_emb_), batch.tokens),
                   ops::embedding(bind(tape, pos_emb_), positions));
  const auto heads = static_cast<std::size_t>(config_.n_heads);
  for (const BlockIds& blk : blocks_) {
    Var h = ops::layer_norm(x, bind(tape, blk.ln1_g), bind(tape, blk.ln1_b));
    Var qkv = ops::add_row(ops::matmul(h, bind(tape, blk.qkv_w)), bind(tape, blk.qkv_b));
    Var att = ops::causal_attention(qkv, batch.lengths, batch.seq_len, heads);
    att = ops::add_row(ops::matmul(att, bind(tape, blk.out_w)), bind(tape, blk.out_b));
    x = ops::add(x, att);
    h = ops::layer_norm(x, bind(tape, blk.ln2_g), bind(tape, blk.ln2_b));
    Var m = ops::gelu(ops::add_row(ops::matmul(h, bind(tape, blk.fc_w)), bind(tape, blk.fc_b)));
    m = ops::add_row(ops::matmul(m, bind(tape, blk.proj_w)), bind(tape, blk.proj_b));
    x = ops::add(x, m);
  }
  return x;
}

Var TransformerLM::head_logits(Tape& tape, Var hidden_rows) const {
  Var h = ops::layer_norm(hidden_rows, bind(tape, lnf_g_), bind(tape, lnf_b_));
  return ops::matmul(h, bind(tape, head_));
}

Var TransformerLM::response_logprobs(Tape& tape, const data::SequenceBatch& batch) const {
  check_lengths(batch);
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  rows.reserve(batch.response_tokens());
  targets.reserve(batch.response_tokens());
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = batch.prompt_lens[b]; t < batch.lengths[b]; ++t) {
      rows.push_back(b * batch.seq_len + t - 1);
      targets.push_back(batch.tokens[b * batch.seq_len + t]);
    }
  }
  if (rows.empty()) return tape.constant(Tensor(Shape{0}));
  Var hidden = trunk(tape, batch);
  Var logits = head_logits(tape, ops::gather_rows(hidden, rows));
  return ops::log_softmax_gather(logits, targets);
}

std::vector<std::vector<double>> TransformerLM::batch_logprobs(
    const data::SequenceBatch& batch) const {
  Tape tape(Tape::Mode::kInference);
  const Tensor& lp = response_logprobs(tape, batch).value();
  std::vector<std::vector<double>> out(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    out[b].assign(lp.raw() + batch.response_offsets[b], lp.raw() + batch.response_offsets[b + 1]);
  }
  return out;
}

std::vector<double> TransformerLM::forward_logprobs(std::span<const int> tokens,
                                                    std::size_t prompt_len) const {
  if (prompt_len == 0 || prompt_len > tokens.size()) {
    throw LengthError("forward_logprobs: prompt length " + std::to_string(prompt_len) +
                      " invalid for " + std::to_string(tokens.size()) + " tokens");
  }
  const data::SequenceRef ref{tokens.first(prompt_len), tokens.subspan(prompt_len)};
  return batch_logprobs(data::pack_sequences(std::span(&ref, 1))).front();
}

double TransformerLM::sequence_logprob(std::span<const int> tokens, std::size_t prompt_len) const {
  double s = 0.0;
  for (double v : forward_logprobs(tokens, prompt_len)) s += v;
  return s;
}

std::vector<double> TransformerLM::next_token_logprobs(std::span<const int> tokens) const {
  if (tokens.empty()) throw LengthError("next_token_logprobs: empty prefix");
  const data::SequenceRef ref{tokens, {}};
  const data::SequenceBatch batch = data::pack_sequences(std::span(&ref, 1));
  check_lengths(batch);
  Tape tape(Tape::Mode::kInference);
  const std::size_t last = tokens.size() - 1;
  Var logits = head_logits(tape, ops::gather_rows(trunk(tape, batch), std::span(&last, 1)));
  const Tensor& lv = logits.value();
  const double lse = numerics::log_sum_exp(lv.data());
  std::vector<double> out(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) out[i] = lv[i] - lse;
  return out;
}

Generation TransformerLM::generate(std::span<const int> prompt, std::size_t max_new,
                                   double temperature, std::uint64_t rng_seed,
                                   int eos_token) const {
  if (!(temperature > 0.0)) throw ConfigError("generate: temperature must be > 0");
  const auto ctx = static_cast<std::size_t>(config_.context_len);
  if (prompt.empty() || prompt.size() > ctx) {
    throw LengthError("generate: prompt of " + std::to_string(prompt.size()) +
                      " tokens does not fit context length " + std::to_string(ctx));
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  data::TokenSeq seq(prompt.begin(), prompt.end());
  Generation gen;
  while (gen.tokens.size() < max_new && seq.size() < ctx) {
    const std::vector<double> lp = next_token_logprobs(seq);
    // Tempered distribution, max-subtracted.
    double mx = *std::max_element(lp.begin(), lp.end());
    std::vector<double> w(lp.size());
    double z = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      w[i] = std::exp((lp[i] - mx) / temperature);
      z += w[i];
    }
    const double u = uniform(rng) * z;
    std::size_t pick = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (w[i] > 0.0) pick = i;
      if (u < acc) break;
    }
    const int token = static_cast<int>(pick);
    gen.tokens.push_back(token);
    gen.logprobs.push_back(lp[pick]);
    seq.push_back(token);
    if (token == eos_token) break;
  }
  return gen;
}

TransformerLM TransformerLM::freeze_copy(ModelRole role) const {
  if (role == ModelRole::kPolicy) throw std::logic_error("freeze_copy needs a frozen role");
  TransformerLM copy(*this);
  copy.role_ = role;
  for (auto& p : copy.params_) p.tensor.set_requires_grad(false);
  return copy;
}

std::string TransformerLM::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::string cfg = nlohmann::json(config_).dump();
  mix(cfg.data(), cfg.size());
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.tensor.raw(), p.tensor.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tokreg::model
