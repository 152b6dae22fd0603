// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tokreg/model/config.hpp"
#include "tokreg/trainer/trainer.hpp"

namespace tokreg::cli {

struct DataConfig {
  std::string train;  // JSONL preference records (required)
  std::string eval;   // optional held-out records
};

/// Optional supervised stage applied to a fresh policy before the reference
/// and evaluator are frozen (see trainer::make_synthetic_warmup_corpus).
struct WarmStartConfig {
  std::size_t steps = 0;
  std::size_t corpus_size = 20000;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double revision_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Everything a train run reads. Serializes to the config file layout:
///
///   {"model": {...}, "data": {...}, "train": {..., "loss": {...}},
///    "warm_start": {...}, "init_checkpoint": "", "evaluator_checkpoint": "",
///    "reward_policy_checkpoint": "", "reward_cache": "", "output_dir": "",
///    "resume": ""}
struct RunConfig {
  model::ModelConfig model;
  DataConfig data;
  trainer::TrainConfig train;
  WarmStartConfig warm_start;
  std::string init_checkpoint;
  std::string evaluator_checkpoint;
  std::string reward_policy_checkpoint;
  std::string reward_cache;
  std::string output_dir = "runs/default";
  std::string resume;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Unknown or mistyped fields raise ConfigError with their dotted path.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Sets `dotted` (e.g. "train.loss.alpha") to `value`, parsed as JSON when
/// possible and as a string otherwise. Paths that start with a train field
/// ("loss.alpha", "learning_rate") resolve under "train". Throws ConfigError
/// for paths that name no existing field.
void apply_override(nlohmann::json& config, std::string_view dotted, std::string_view value);

nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace tokreg::cli
