// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/diagnostics/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tokreg/errors.hpp"
#include "tokreg/rewards/token_rewards.hpp"

namespace tokreg::diagnostics {
namespace {

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#9166;<br>"; break;
      case ' ': out += "&nbsp;"; break;
      default: out += c;
    }
  }
  return out;
}

HeatmapRecord make_record(const model::TransformerLM& policy,
                          const model::TransformerLM& reference, const data::PreferencePair& pair,
                          const data::TokenSeq& response, std::string side) {
  rewards::require_shared_vocabulary(policy, reference);
  data::TokenSeq seq = pair.prompt;
  seq.insert(seq.end(), response.begin(), response.end());
  const auto lp = policy.forward_logprobs(seq, pair.prompt_len());
  const auto ref = reference.forward_logprobs(seq, pair.prompt_len());
  HeatmapRecord r;
  r.id = pair.id;
  r.side = std::move(side);
  for (int t : response) r.tokens.push_back(data::token_display(t));
  r.values.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) r.values[i] = lp[i] - ref[i];
  if (!r.values.empty()) {
    const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
    r.min_value = *lo;
    r.max_value = *hi;
  }
  r.scale = symmetric_scale(r.values);
  return r;
}

}  // namespace

HeatmapFormat heatmap_format_from_name(std::string_view name) {
  if (name == "json") return HeatmapFormat::kJson;
  if (name == "html") return HeatmapFormat::kHtml;
  if (name == "both") return HeatmapFormat::kBoth;
  throw ConfigError("heatmap format must be json, html or both, got \"" + std::string(name) +
                    "\"");
}

double symmetric_scale(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> mag(values.size());
  std::transform(values.begin(), values.end(), mag.begin(), [](double v) { return std::abs(v); });
  std::sort(mag.begin(), mag.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(mag.size())));
  return mag[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<HeatmapRecord> heatmap_records(const model::TransformerLM& policy,
                                           const model::TransformerLM& reference,
                                           const data::PreferencePair& pair) {
  return {make_record(policy, reference, pair, pair.chosen, "chosen"),
          make_record(policy, reference, pair, pair.rejected, "rejected")};
}

nlohmann::json heatmap_to_json(std::span<const HeatmapRecord> records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"id", r.id},
                   {"side", r.side},
                   {"tokens", r.tokens},
                   {"rewards", r.values},
                   {"source", r.source},
                   {"min", r.min_value},
                   {"max", r.max_value},
                   {"scale", r.scale}});
  }
  return arr;
}

std::vector<HeatmapRecord> heatmap_from_json(const nlohmann::json& j) {
  std::vector<HeatmapRecord> out;
  try {
    for (const auto& e : j) {
      HeatmapRecord r;
      r.id = e.at("id").get<std::string>();
      r.side = e.at("side").get<std::string>();
      r.tokens = e.at("tokens").get<std::vector<std::string>>();
      r.values = e.at("rewards").get<std::vector<double>>();
      r.source = e.at("source").get<std::string>();
      r.min_value = e.at("min").get<double>();
      r.max_value = e.at("max").get<double>();
      r.scale = e.at("scale").get<double>();
      if (r.tokens.size() != r.values.size()) {
        throw ParseError("heatmap record " + r.id + ": tokens and rewards differ in length");
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("heatmap: ") + e.what());
  }
  return out;
}

std::string heatmap_to_html(std::span<const HeatmapRecord> records) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>token rewards</title>\n"
        "<style>body{font-family:monospace}span.t{padding:1px 0}"
        "div.r{margin:1em 0;line-height:1.8}</style></head><body>\n";
  for (const auto& r : records) {
    os << "<div class=\"r\"><b>" << html_escape(r.id) << " (" << html_escape(r.side)
       << ")</b> scale &plusmn;" << r.scale << "<br>\n";
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      const double v = r.values[i];
      const double a = r.scale > 0.0 ? std::min(1.0, std::abs(v) / r.scale) : 0.0;
      const char* rgb = v > 0.0 ? "220,40,40" : "40,80,220";
      os << "<span class=\"t\" title=\"" << v << "\" style=\"background:rgba(" << rgb << ','
         << a << ")\">" << html_escape(r.tokens[i]) << "</span>";
    }
    os << "</div>\n";
  }
  os << "</body></html>\n";
  return os.str();
}

std::vector<std::filesystem::path> export_heatmap(std::span<const HeatmapRecord> records,
                                                  const std::filesystem::path& stem,
                                                  HeatmapFormat format) {
  std::vector<std::filesystem::path> written;
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto write = [&](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
  };
  if (format != HeatmapFormat::kHtml) {
    auto path = stem;
    path += ".json";
    write(path, heatmap_to_json(records).dump(2, ' ', false,
                                              nlohmann::json::error_handler_t::replace) +
                    "\n");
  }
  if (format != HeatmapFormat::kJson) {
    auto path = stem;
    path += ".html";
    write(path, heatmap_to_html(records));
  }
  return written;
}

}  // namespace tokreg::diagnostics
