// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokreg/data/tokenizer.hpp"
#include "tokreg/model/transformer.hpp"
#include "tokreg/rewards/token_rewards.hpp"

namespace tokreg::rewards {

enum class RevisionDirection { kBetter, kWorse };

std::string_view direction_word(RevisionDirection direction) noexcept;
// Aspect list used in the "{detailed_description}" slot.
std::string_view direction_aspects(RevisionDirection direction) noexcept;
// "more <aspects>".
std::string detailed_description(RevisionDirection direction);

/// Answer-revision prompt for one direction, ending right after
/// "[The start of a rewritten <direction> answer]" and exactly one newline,
/// so the answer is scored as the rewritten answer's continuation.
data::TokenSeq render_revision_prompt(std::string_view instruction, std::string_view answer,
                                      RevisionDirection direction);
std::string render_revision_prompt_text(std::string_view instruction, std::string_view answer,
                                        RevisionDirection direction);

/// The two revision prompts that score one answer. Offsets index the first
/// answer token in the full (prompt + answer) sequences.
struct ContrastivePromptPair {
  data::TokenSeq x_better;
  data::TokenSeq x_worse;
  std::size_t response_offset_better = 0;
  std::size_t response_offset_worse = 0;
};

/// Renders both prompts. `answer_tokens` is how many tokens the scored answer
/// will occupy; throws LengthError when prompt + answer exceeds context_len.
/// Instruction and answer must be non-empty.
ContrastivePromptPair render_contrastive_prompts(std::string_view instruction,
                                                 std::string_view answer,
                                                 std::size_t answer_tokens,
                                                 std::size_t context_len);

/// sigma(better - worse) - 0.5 per token, written as 0.5 * tanh((better - worse) / 2)
/// so that swapping the two inputs negates every value bit-exactly.
TokenRewardVector contrastive_rewards_from_logprobs(std::span<const double> better,
                                                    std::span<const double> worse);

/// Self-generated token rewards from a frozen evaluator: one forward pass per
/// prompt, each scoring all answer tokens at once. Throws DiagnosticError on
/// a non-finite log-prob.
TokenRewardVector contrastive_token_rewards(const model::TransformerLM& evaluator,
                                            const ContrastivePromptPair& prompts,
                                            std::span<const int> answer_tokens);

/// Convenience: render and score `answer` (as its response tokens, i.e.
/// bytes followed by <eos>) for `instruction`.
TokenRewardVector score_answer(const model::TransformerLM& evaluator, std::string_view instruction,
                               std::string_view answer);

}  // namespace tokreg::rewards
