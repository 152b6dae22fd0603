// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tokreg::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Entry point of the `tokreg` tool. `args` excludes the program name.
///
///   synth      write a planted-error preference dataset
///   train      preference optimization from a config file plus --dotted.path overrides
///   annotate   cache token rewards for every record
///   gradcheck  finite-difference checks of every loss variant
///   eval       held-out metrics of a policy against its reference
///   heatmap    per-token log-ratio export (JSON and/or HTML)
///
/// Returns 0 on success, 1 on a runtime failure, 2 on a usage or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Cache directory override read by annotate and train.
inline constexpr const char* kCacheDirEnv = "TOKREG_CACHE_DIR";

}  // namespace tokreg::cli
