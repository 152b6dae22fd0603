// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/cli/config.hpp"

#include <fstream>
#include <vector>

#include "tokreg/errors.hpp"

namespace tokreg::cli {
namespace {

template <typename T>
T field(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

void require_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

std::vector<std::string> split(std::string_view dotted) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    parts.emplace_back(dotted.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.train.empty()) throw ConfigError("data.train: missing dataset path");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  if (warm_start.steps > 0) {
    if (warm_start.corpus_size == 0) throw ConfigError("warm_start.corpus_size must be > 0");
    if (warm_start.batch_size == 0) throw ConfigError("warm_start.batch_size must be > 0");
    if (!(warm_start.learning_rate > 0.0)) {
      throw ConfigError("warm_start.learning_rate must be > 0");
    }
    if (!init_checkpoint.empty()) {
      throw ConfigError("warm_start.steps: not allowed together with init_checkpoint");
    }
  }
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"data", {{"train", c.data.train}, {"eval", c.data.eval}}},
          {"train", c.train},
          {"warm_start",
           {{"steps", c.warm_start.steps},
            {"corpus_size", c.warm_start.corpus_size},
            {"batch_size", c.warm_start.batch_size},
            {"learning_rate", c.warm_start.learning_rate},
            {"revision_fraction", c.warm_start.revision_fraction},
            {"seed", c.warm_start.seed}}},
          {"init_checkpoint", c.init_checkpoint},
          {"evaluator_checkpoint", c.evaluator_checkpoint},
          {"reward_policy_checkpoint", c.reward_policy_checkpoint},
          {"reward_cache", c.reward_cache},
          {"output_dir", c.output_dir},
          {"resume", c.resume}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_object(j, "config");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      require_object(value, "model");
      const nlohmann::json known = c.model;
      for (const auto& [k, v] : value.items()) {
        if (!known.contains(k)) throw ConfigError("model." + k + ": unknown field");
        if (!v.is_number_integer()) throw ConfigError("model." + k + ": wrong type");
      }
      c.model = field<model::ModelConfig>(value, "model");
    } else if (key == "data") {
      require_object(value, "data");
      for (const auto& [k, v] : value.items()) {
        if (k == "train") {
          c.data.train = field<std::string>(v, "data.train");
        } else if (k == "eval") {
          c.data.eval = field<std::string>(v, "data.eval");
        } else {
          throw ConfigError("data." + k + ": unknown field");
        }
      }
    } else if (key == "train") {
      c.train = value.get<trainer::TrainConfig>();
    } else if (key == "warm_start") {
      require_object(value, "warm_start");
      auto& w = c.warm_start;
      for (const auto& [k, v] : value.items()) {
        const std::string path = "warm_start." + k;
        if (k == "steps") {
          w.steps = field<std::size_t>(v, path);
        } else if (k == "corpus_size") {
          w.corpus_size = field<std::size_t>(v, path);
        } else if (k == "batch_size") {
          w.batch_size = field<std::size_t>(v, path);
        } else if (k == "learning_rate") {
          w.learning_rate = field<double>(v, path);
        } else if (k == "revision_fraction") {
          w.revision_fraction = field<double>(v, path);
        } else if (k == "seed") {
          w.seed = field<std::uint64_t>(v, path);
        } else {
          throw ConfigError(path + ": unknown field");
        }
      }
    } else if (key == "init_checkpoint") {
      c.init_checkpoint = field<std::string>(value, key);
    } else if (key == "evaluator_checkpoint") {
      c.evaluator_checkpoint = field<std::string>(value, key);
    } else if (key == "reward_policy_checkpoint") {
      c.reward_policy_checkpoint = field<std::string>(value, key);
    } else if (key == "reward_cache") {
      c.reward_cache = field<std::string>(value, key);
    } else if (key == "output_dir") {
      c.output_dir = field<std::string>(value, key);
    } else if (key == "resume") {
      c.resume = field<std::string>(value, key);
    } else {
      throw ConfigError(key + ": unknown field");
    }
  }
  return c;
}

void apply_override(nlohmann::json& config, std::string_view dotted, std::string_view value) {
  std::vector<std::string> parts = split(dotted);
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("override \"" + std::string(dotted) + "\": empty path segment");
  }
  const nlohmann::json defaults = to_json(RunConfig{});
  if (!defaults.contains(parts.front()) && defaults.at("train").contains(parts.front())) {
    parts.insert(parts.begin(), "train");
  }
  const nlohmann::json* known = &defaults;
  nlohmann::json* target = &config;
  std::string path;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    path += (i ? "." : "") + parts[i];
    if (!known->is_object() || !known->contains(parts[i])) {
      throw ConfigError(path + ": unknown config field");
    }
    known = &known->at(parts[i]);
    if (!target->is_object()) *target = nlohmann::json::object();
    target = &(*target)[parts[i]];
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = std::string(value);
  }
  if (known->is_string() && !parsed.is_string()) parsed = std::string(value);
  *target = std::move(parsed);
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

}  // namespace tokreg::cli
