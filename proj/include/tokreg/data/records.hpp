// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokreg/data/tokenizer.hpp"

namespace tokreg::data {

// Half-open [start, end) range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  bool contains(std::size_t i) const noexcept { return i >= start && i < end; }
  std::size_t size() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// One preference judgement: `chosen` is preferred over `rejected`.
/// When present, the planted span marks the bytes of `rejected` that decide
/// the preference.
struct PreferenceRecord {
  std::string id;
  std::string instruction;
  std::string chosen;
  std::string rejected;
  std::optional<Span> planted_span;

  // Throws ParseError on empty texts, chosen == rejected, or a span outside rejected.
  void validate() const;
  friend bool operator==(const PreferenceRecord&, const PreferenceRecord&) = default;
};

/// Line-delimited JSON: {"id", "instruction", "chosen", "rejected",
/// optional "planted_span": [start, end]}. Blank lines are skipped. Errors
/// carry the 1-based line number; duplicate ids are rejected.
std::vector<PreferenceRecord> parse_records(std::istream& in);
std::vector<PreferenceRecord> load_records(const std::filesystem::path& path);

std::string record_to_json_line(const PreferenceRecord& record);
void write_records(const std::filesystem::path& path, std::span<const PreferenceRecord> records);

/// Tokenized record. The prompt is <bos> instruction <sep>; each response is
/// its answer bytes followed by <eos>.
struct PreferencePair {
  std::string id;
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  // Planted span projected onto rejected response token indices.
  std::optional<Span> planted_span;

  std::size_t prompt_len() const noexcept { return prompt.size(); }
};

TokenSeq make_prompt(std::string_view instruction);
TokenSeq make_response(std::string_view answer);

/// Throws LengthError when either full sequence exceeds context_len.
PreferencePair tokenize_record(const PreferenceRecord& record, std::size_t context_len);
std::vector<PreferencePair> tokenize_records(std::span<const PreferenceRecord> records,
                                             std::size_t context_len);

}  // namespace tokreg::data
