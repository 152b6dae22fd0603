// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/data/synthetic.hpp"

#include <stdexcept>

namespace tokreg::data {

std::string synthetic_random_word(std::mt19937_64& rng, const SyntheticTaskOptions& options) {
  std::uniform_int_distribution<std::size_t> letter(0, options.alphabet.size() - 1);
  std::string word(options.word_length, ' ');
  for (char& c : word) c = options.alphabet[letter(rng)];
  return word;
}

std::string synthetic_answer(std::string_view word) {
  std::string out(kSyntheticAnswerPrefix);
  out += word;
  out += '.';
  return out;
}

std::string synthetic_corrupt(std::string_view answer, std::mt19937_64& rng,
                              const SyntheticTaskOptions& options, Span& span) {
  const std::size_t word_begin = kSyntheticAnswerPrefix.size();
  const std::size_t word_len = answer.size() - word_begin - 1;
  std::uniform_int_distribution<std::size_t> span_len_dist(1, std::min(options.max_span_len,
                                                                        word_len));
  const std::size_t len = span_len_dist(rng);
  std::uniform_int_distribution<std::size_t> start_dist(0, word_len - len);
  const std::size_t start = word_begin + start_dist(rng);
  std::uniform_int_distribution<std::size_t> shift(1, options.alphabet.size() - 1);
  std::string out(answer);
  for (std::size_t i = start; i < start + len; ++i) {
    const std::size_t pos = options.alphabet.find(out[i]);
    out[i] = options.alphabet[(pos + shift(rng)) % options.alphabet.size()];
  }
  span = Span{start, start + len};
  return out;
}

std::vector<PreferenceRecord> make_synthetic_planted_task(std::size_t n, std::uint64_t seed,
                                                          const SyntheticTaskOptions& options) {
  if (n == 0) throw std::invalid_argument("make_synthetic_planted_task: n must be positive");
  if (options.alphabet.size() < 2 || options.word_length == 0 || options.max_span_len == 0) {
    throw std::invalid_argument("make_synthetic_planted_task: degenerate options");
  }
  std::mt19937_64 rng(seed);
  std::vector<PreferenceRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string word = synthetic_random_word(rng, options);
    PreferenceRecord r;
    r.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
    r.instruction = std::string(kSyntheticInstructionPrefix) + word;
    r.chosen = synthetic_answer(word);
    Span span;
    r.rejected = synthetic_corrupt(r.chosen, rng, options, span);
    r.planted_span = span;
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t synthetic_error_count(std::string_view instruction, std::string_view answer) {
  const std::string_view word = instruction.substr(
      std::min(instruction.size(), kSyntheticInstructionPrefix.size()));
  const std::string expected = synthetic_answer(word);
  std::size_t errors = expected.size() > answer.size() ? expected.size() - answer.size()
                                                        : answer.size() - expected.size();
  for (std::size_t i = 0; i < std::min(expected.size(), answer.size()); ++i) {
    if (expected[i] != answer[i]) ++errors;
  }
  return errors;
}

bool synthetic_prefers(std::string_view instruction, std::string_view a, std::string_view b) {
  return synthetic_error_count(instruction, a) < synthetic_error_count(instruction, b);
}

}  // namespace tokreg::data
