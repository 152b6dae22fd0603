// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>

#include "tokreg/data/tokenizer.hpp"

namespace tokreg::model {

/// Shape of the decoder-only transformer. Defaults are the desk-scale model
/// (~0.5M parameters).
struct ModelConfig {
  int vocab_size = data::kVocabSize;
  int context_len = 256;
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace tokreg::model
