// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tokreg/model/transformer.hpp"

namespace tokreg::model {

/// Binary checkpoint container.
///
///   bytes 0..7   magic "TOKREGC1"
///   bytes 8..15  header length N, little-endian uint64
///   next N bytes JSON header: format, config, role, step, rng_state,
///                metadata, and the ordered tensor table (name, shape, group)
///   remainder    tensor payloads in table order, row-major little-endian
///                IEEE-754 binary64
///
/// Tensors in group "model" are the parameters; group "extra" carries
/// optimizer moments and other run state. Save followed by load is bit-exact.
struct Checkpoint {
  ModelConfig config;
  ModelRole role = ModelRole::kPolicy;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> extra;
  std::uint64_t step = 0;
  std::string rng_state;
  nlohmann::json metadata = nlohmann::json::object();

  TransformerLM to_model() const;
};

Checkpoint make_checkpoint(const TransformerLM& model);

/// Writes to a temporary sibling and renames into place. Throws
/// std::runtime_error when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
void save_model(const std::filesystem::path& path, const TransformerLM& model);

/// Throws ParseError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);
TransformerLM load_model(const std::filesystem::path& path);

}  // namespace tokreg::model
