// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/data/tokenizer.hpp"

#include <array>

#include "tokreg/errors.hpp"

namespace tokreg::data {
namespace {

// "’" is U+2019, kept as the original template spells it.
constexpr std::array<std::string_view, static_cast<std::size_t>(TemplateSegment::kCount)>
    kSegments = {
        "Instruction: Below is a conversation between an user and an AI Assistant.\n\n"
        "[User Question]\n",
        "\n\n[The start of Assistant\xE2\x80\x99s Answer]\n",
        "\n\n[The end of Assistant\xE2\x80\x99s Answer]\n\n"
        "Please rewrite the Assistant\xE2\x80\x99s Answer to make it ",
        ". Specifically, the rewritten ",
        " answer should closely resemble the original answer but is ",
        " in terms of one or multiple of the following aspects:\n\n"
        "helpfulness, correctness, coherence, verbosity.\n\n"
        "IMPORTANT: Please strictly follow the following format:\n"
        "First, choose one or multiple aspects to generate a ",
        " answer, such as rewrite the original answer to be ",
        ", etc.\n\n[The start of a rewritten ",
        " answer]\n",
};

}  // namespace

int template_token(TemplateSegment segment) noexcept {
  return kTemplateTokenBase + static_cast<int>(segment);
}

std::string_view template_segment_text(TemplateSegment segment) noexcept {
  return kSegments[static_cast<std::size_t>(segment)];
}

bool is_template_token(int token) noexcept {
  return token >= kTemplateTokenBase && token < kVocabSize;
}

TokenSeq encode(std::string_view text) {
  TokenSeq out;
  append_encoded(out, text);
  return out;
}

void append_encoded(TokenSeq& out, std::string_view text) {
  out.reserve(out.size() + text.size());
  for (char c : text) out.push_back(static_cast<int>(static_cast<unsigned char>(c)));
}

std::string decode(std::span<const int> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t >= 0 && t < kByteTokens) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    } else if (is_template_token(t)) {
      out += kSegments[static_cast<std::size_t>(t - kTemplateTokenBase)];
    } else if (t < 0 || t >= kVocabSize) {
      throw IndexError("decode: token id " + std::to_string(t) + " outside vocabulary");
    }
  }
  return out;
}

std::string token_display(int token) {
  switch (token) {
    case kPad: return "<pad>";
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    case kSep: return "<sep>";
    default: break;
  }
  const int one[] = {token};
  return decode(one);
}

}  // namespace tokreg::data
