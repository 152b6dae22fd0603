// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tokreg::data {

using TokenSeq = std::vector<int>;

// Token ids 0..255 are raw bytes. Control tokens follow, then one token per
// constant segment of the answer-revision template.
inline constexpr int kByteTokens = 256;
inline constexpr int kPad = 256;
inline constexpr int kBos = 257;
inline constexpr int kEos = 258;
inline constexpr int kSep = 259;

enum class TemplateSegment : int {
  kPreamble = 0,
  kAnswerOpen,
  kRewriteRequest,
  kSpecifically,
  kResemble,
  kAspects,
  kSuchAs,
  kRewrittenOpen,
  kRewrittenClose,
  kCount,
};

inline constexpr int kTemplateTokenBase = 260;
inline constexpr int kVocabSize = kTemplateTokenBase + static_cast<int>(TemplateSegment::kCount);

int template_token(TemplateSegment segment) noexcept;
std::string_view template_segment_text(TemplateSegment segment) noexcept;
bool is_template_token(int token) noexcept;

/// One token per byte.
TokenSeq encode(std::string_view text);
void append_encoded(TokenSeq& out, std::string_view text);

/// Inverse of encode(). Template tokens expand to their text; control tokens
/// produce nothing. Throws IndexError on ids outside the vocabulary.
std::string decode(std::span<const int> tokens);

/// Printable form of a single token for reports: bytes as text, control
/// tokens as <pad>/<bos>/<eos>/<sep>, template tokens as their text.
std::string token_display(int token);

}  // namespace tokreg::data
