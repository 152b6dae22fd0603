// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tokreg/data/records.hpp"

namespace tokreg::data {

/// Copy task with a planted error.
///
///   instruction: "Copy: <word>"
///   chosen:      "Answer: <word>."
///   rejected:    "Answer: <word with 1..max_span_len letters substituted>."
///
/// The substituted letters form the planted span and are the only bytes where
/// chosen and rejected differ.
struct SyntheticTaskOptions {
  std::size_t word_length = 6;
  std::size_t max_span_len = 2;
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
};

inline constexpr std::string_view kSyntheticInstructionPrefix = "Copy: ";
inline constexpr std::string_view kSyntheticAnswerPrefix = "Answer: ";

std::vector<PreferenceRecord> make_synthetic_planted_task(std::size_t n, std::uint64_t seed,
                                                          const SyntheticTaskOptions& options = {});

std::string synthetic_random_word(std::mt19937_64& rng, const SyntheticTaskOptions& options);
std::string synthetic_answer(std::string_view word);

/// Substitutes a contiguous run of letters inside the word part of `answer`.
/// Returns the corrupted answer; `span` receives the changed byte range.
std::string synthetic_corrupt(std::string_view answer, std::mt19937_64& rng,
                              const SyntheticTaskOptions& options, Span& span);

/// Ground-truth scorer: number of answer letters that disagree with the
/// instruction's word (plus a penalty for a malformed answer).
std::size_t synthetic_error_count(std::string_view instruction, std::string_view answer);

/// True when the scorer strictly prefers `a` over `b`.
bool synthetic_prefers(std::string_view instruction, std::string_view a, std::string_view b);

}  // namespace tokreg::data
