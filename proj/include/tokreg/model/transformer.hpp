// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokreg/data/batching.hpp"
#include "tokreg/model/config.hpp"
#include "tokreg/numerics/tape.hpp"

namespace tokreg::model {

enum class ModelRole { kPolicy, kReference, kEvaluator };

std::string_view role_name(ModelRole role) noexcept;
ModelRole role_from_name(std::string_view name);

struct NamedTensor {
  std::string name;
  numerics::Tensor tensor;
};

struct Generation {
  data::TokenSeq tokens;         // continuation only, may end with <eos>
  std::vector<double> logprobs;  // model log-prob (temperature 1) of each sampled token
};

/// Pre-norm decoder-only transformer with learned positional embeddings.
///
/// The policy role is trainable. Reference and evaluator roles are frozen:
/// their parameters never require gradients, so a tape built over them
/// records values only. Forward passes only read parameters and may run
/// concurrently on a model that is not being updated.
class TransformerLM {
 public:
  explicit TransformerLM(const ModelConfig& config);
  TransformerLM(const ModelConfig& config, std::vector<NamedTensor> params, ModelRole role);

  const ModelConfig& config() const noexcept { return config_; }
  ModelRole role() const noexcept { return role_; }
  bool frozen() const noexcept { return role_ != ModelRole::kPolicy; }

  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  // Mutable access for the optimizer and checkpoint loading. Throws on frozen models.
  std::vector<NamedTensor>& mutable_parameters();
  std::vector<numerics::Tensor*> parameter_tensors();
  std::size_t parameter_count() const noexcept;
  const numerics::Tensor& parameter(std::string_view name) const;

  /// Log-probability of every response token in the batch, flattened in
  /// SequenceBatch::response_offsets order. Throws LengthError for sequences
  /// longer than the context.
  numerics::Var response_logprobs(numerics::Tape& tape, const data::SequenceBatch& batch) const;

  /// Forward-only: per-sequence response log-probs for a whole batch.
  std::vector<std::vector<double>> batch_logprobs(const data::SequenceBatch& batch) const;

  /// Log-probs of tokens[prompt_len..] given their prefixes.
  std::vector<double> forward_logprobs(std::span<const int> tokens, std::size_t prompt_len) const;
  double sequence_logprob(std::span<const int> tokens, std::size_t prompt_len) const;

  /// Full log-distribution over the vocabulary for the token after `tokens`.
  std::vector<double> next_token_logprobs(std::span<const int> tokens) const;

  /// Ancestral sampling at `temperature`, stopping at <eos>, after `max_new`
  /// tokens, or when the context is full. Deterministic given rng_seed.
  Generation generate(std::span<const int> prompt, std::size_t max_new, double temperature,
                      std::uint64_t rng_seed, int eos_token = data::kEos) const;

  /// Deep copy in a frozen role; later updates to this model leave it unchanged.
  TransformerLM freeze_copy(ModelRole role = ModelRole::kReference) const;

  /// FNV-1a over config and parameter bytes, as 16 hex digits.
  std::string content_hash() const;

 private:
  struct BlockIds {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, fc_w, fc_b, proj_w,
        proj_b;
  };

  void index_parameters();
  numerics::Var trunk(numerics::Tape& tape, const data::SequenceBatch& batch) const;
  numerics::Var head_logits(numerics::Tape& tape, numerics::Var hidden_rows) const;
  numerics::Var bind(numerics::Tape& tape, std::size_t index) const;
  void check_lengths(const data::SequenceBatch& batch) const;

  ModelConfig config_;
  ModelRole role_ = ModelRole::kPolicy;
  std::vector<NamedTensor> params_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, head_ = 0;
  std::vector<BlockIds> blocks_;
};

}  // namespace tokreg::model
