// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokreg/data/records.hpp"
#include "tokreg/model/transformer.hpp"

namespace tokreg::diagnostics {

/// Per-token rewards of one response, ready for rendering.
///
/// `values` are the raw log-ratios log(pi / pi_ref), without beta. The colour
/// scale is symmetric: cells saturate at +/- `scale`, the 95th percentile of
/// |value| over the response.
struct HeatmapRecord {
  std::string id;
  std::string side;  // "chosen" or "rejected"
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::string source = "log_ratio";
  double min_value = 0.0;
  double max_value = 0.0;
  double scale = 0.0;
};

enum class HeatmapFormat { kJson, kHtml, kBoth };
HeatmapFormat heatmap_format_from_name(std::string_view name);

/// Nearest-rank 95th percentile of |values|; 0 for an empty input.
double symmetric_scale(std::span<const double> values);

/// Builds records for both responses of a pair. Throws IndexError when a
/// token cannot be displayed.
std::vector<HeatmapRecord> heatmap_records(const model::TransformerLM& policy,
                                           const model::TransformerLM& reference,
                                           const data::PreferencePair& pair);

nlohmann::json heatmap_to_json(std::span<const HeatmapRecord> records);
std::vector<HeatmapRecord> heatmap_from_json(const nlohmann::json& j);

/// Standalone page: positive cells red, negative blue, intensity |v| / scale.
std::string heatmap_to_html(std::span<const HeatmapRecord> records);

/// Writes `<stem>.json` and/or `<stem>.html`; returns the paths written.
std::vector<std::filesystem::path> export_heatmap(std::span<const HeatmapRecord> records,
                                                  const std::filesystem::path& stem,
                                                  HeatmapFormat format);

}  // namespace tokreg::diagnostics
