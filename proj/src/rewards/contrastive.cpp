// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/rewards/contrastive.hpp"

#include <cmath>

#include "tokreg/data/records.hpp"
#include "tokreg/errors.hpp"

namespace tokreg::rewards {
namespace {

using data::TemplateSegment;
using data::template_token;

}  // namespace

std::string_view direction_word(RevisionDirection direction) noexcept {
  return direction == RevisionDirection::kBetter ? "better" : "worse";
}

std::string_view direction_aspects(RevisionDirection direction) noexcept {
  return direction == RevisionDirection::kBetter ? "helpful, correct, coherent, concise"
                                                 : "unhelpful, incorrect, incoherent, verbose";
}

std::string detailed_description(RevisionDirection direction) {
  return "more " + std::string(direction_aspects(direction));
}

data::TokenSeq render_revision_prompt(std::string_view instruction, std::string_view answer,
                                      RevisionDirection direction) {
  const std::string_view dir = direction_word(direction);
  data::TokenSeq t{data::kBos, template_token(TemplateSegment::kPreamble)};
  data::append_encoded(t, instruction);
  t.push_back(template_token(TemplateSegment::kAnswerOpen));
  data::append_encoded(t, answer);
  t.push_back(template_token(TemplateSegment::kRewriteRequest));
  data::append_encoded(t, dir);
  t.push_back(template_token(TemplateSegment::kSpecifically));
  data::append_encoded(t, dir);
  t.push_back(template_token(TemplateSegment::kResemble));
  data::append_encoded(t, dir);
  t.push_back(template_token(TemplateSegment::kAspects));
  data::append_encoded(t, dir);
  t.push_back(template_token(TemplateSegment::kSuchAs));
  data::append_encoded(t, detailed_description(direction));
  t.push_back(template_token(TemplateSegment::kRewrittenOpen));
  data::append_encoded(t, dir);
  t.push_back(template_token(TemplateSegment::kRewrittenClose));
  return t;
}

std::string render_revision_prompt_text(std::string_view instruction, std::string_view answer,
                                        RevisionDirection direction) {
  return data::decode(render_revision_prompt(instruction, answer, direction));
}

ContrastivePromptPair render_contrastive_prompts(std::string_view instruction,
                                                 std::string_view answer,
                                                 std::size_t answer_tokens,
                                                 std::size_t context_len) {
  if (instruction.empty() || answer.empty()) {
    throw ConfigError("render_contrastive_prompts: instruction and answer must be non-empty");
  }
  ContrastivePromptPair p;
  p.x_better = render_revision_prompt(instruction, answer, RevisionDirection::kBetter);
  p.x_worse = render_revision_prompt(instruction, answer, RevisionDirection::kWorse);
  p.response_offset_better = p.x_better.size();
  p.response_offset_worse = p.x_worse.size();
  const std::size_t longest = std::max(p.x_better.size(), p.x_worse.size()) + answer_tokens;
  if (longest > context_len) {
    throw LengthError("revision prompt plus answer needs " + std::to_string(longest) +
                      " tokens, context length is " + std::to_string(context_len));
  }
  return p;
}

TokenRewardVector contrastive_rewards_from_logprobs(std::span<const double> better,
                                                    std::span<const double> worse) {
  if (better.size() != worse.size()) {
    throw DimensionError("contrastive rewards: " + std::to_string(better.size()) + " vs " +
                         std::to_string(worse.size()) + " log-probs");
  }
  TokenRewardVector r;
  r.source = RewardSource::kContrastive;
  r.values.resize(better.size());
  for (std::size_t i = 0; i < better.size(); ++i) {
    if (!std::isfinite(better[i]) || !std::isfinite(worse[i])) {
      throw DiagnosticError("contrastive rewards: non-finite log-prob at answer token " +
                            std::to_string(i));
    }
    r.values[i] = 0.5 * std::tanh(0.5 * (better[i] - worse[i]));
  }
  return r;
}

TokenRewardVector contrastive_token_rewards(const model::TransformerLM& evaluator,
                                            const ContrastivePromptPair& prompts,
                                            std::span<const int> answer_tokens) {
  if (!evaluator.frozen()) {
    throw ConfigError("contrastive_token_rewards: the evaluator must be a frozen model");
  }
  if (answer_tokens.empty()) throw ConfigError("contrastive_token_rewards: empty answer");
  auto score = [&](const data::TokenSeq& prompt) {
    data::TokenSeq seq = prompt;
    seq.insert(seq.end(), answer_tokens.begin(), answer_tokens.end());
    if (seq.size() > static_cast<std::size_t>(evaluator.config().context_len)) {
      throw LengthError("contrastive_token_rewards: " + std::to_string(seq.size()) +
                        " tokens exceed context length " +
                        std::to_string(evaluator.config().context_len));
    }
    return evaluator.forward_logprobs(seq, prompt.size());
  };
  const std::vector<double> better = score(prompts.x_better);
  const std::vector<double> worse = score(prompts.x_worse);
  return contrastive_rewards_from_logprobs(better, worse);
}

TokenRewardVector score_answer(const model::TransformerLM& evaluator, std::string_view instruction,
                               std::string_view answer) {
  const data::TokenSeq answer_tokens = data::make_response(answer);
  const ContrastivePromptPair prompts =
      render_contrastive_prompts(instruction, answer, answer_tokens.size(),
                                 static_cast<std::size_t>(evaluator.config().context_len));
  return contrastive_token_rewards(evaluator, prompts, answer_tokens);
}

}  // namespace tokreg::rewards
