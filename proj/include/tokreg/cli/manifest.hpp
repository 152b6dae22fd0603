// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tokreg::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Record of one command invocation, written as JSON next to its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();  // resolved settings
  std::map<std::string, std::string> input_hashes;    // path -> FNV-1a of the bytes
  std::string tool_version = std::string(kToolVersion);
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
  int exit_status = 0;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

/// FNV-1a 64 over the file contents, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace tokreg::cli
