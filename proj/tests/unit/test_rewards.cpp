// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>

#include "catch_amalgamated.hpp"
#include "tokreg/data/synthetic.hpp"
#include "tokreg/data/tokenizer.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/rewards/contrastive.hpp"
#include "tokreg/rewards/reward_cache.hpp"
#include "tokreg/rewards/token_rewards.hpp"

using namespace tokreg;
using namespace tokreg::rewards;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

model::TransformerLM small_model(std::uint64_t seed, int context = 192) {
  model::ModelConfig c;
  c.context_len = context;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.seed = seed;
  return model::TransformerLM(c);
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos)) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tokreg_test_rewards";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("revision prompts differ only in the direction slots") {
  const std::string better = render_revision_prompt_text("Say hi", "Hi!", RevisionDirection::kBetter);
  const std::string worse = render_revision_prompt_text("Say hi", "Hi!", RevisionDirection::kWorse);
  CHECK(better != worse);
  const auto neutral = [](std::string s, RevisionDirection d) {
    s = replace_all(s, detailed_description(d), "<desc>");
    return replace_all(s, direction_word(d), "<dir>");
  };
  CHECK(neutral(better, RevisionDirection::kBetter) == neutral(worse, RevisionDirection::kWorse));
  CHECK(detailed_description(RevisionDirection::kBetter) ==
        "more " + std::string(direction_aspects(RevisionDirection::kBetter)));
}

TEST_CASE("revision prompts carry the aspect list and end at the answer") {
  for (auto d : {RevisionDirection::kBetter, RevisionDirection::kWorse}) {
    const std::string text = render_revision_prompt_text("Say hi", "Hi!", d);
    CHECK_THAT(text, ContainsSubstring("helpfulness, correctness, coherence, verbosity."));
    const std::string marker =
        "[The start of a rewritten " + std::string(direction_word(d)) + " answer]\n";
    CHECK(text.size() >= marker.size());
    CHECK(text.substr(text.size() - marker.size()) == marker);
    CHECK(data::decode(render_revision_prompt("Say hi", "Hi!", d)) == text);
  }
  CHECK(direction_aspects(RevisionDirection::kBetter) == "helpful, correct, coherent, concise");
  CHECK(direction_aspects(RevisionDirection::kWorse) == "unhelpful, incorrect, incoherent, verbose");
}

TEST_CASE("response offsets equal the rendered preamble length") {
  const auto answer = data::encode("Hi!");
  const ContrastivePromptPair p = render_contrastive_prompts("Say hi", "Hi!", answer.size(), 512);
  CHECK(p.response_offset_better == p.x_better.size());
  CHECK(p.response_offset_worse == p.x_worse.size());
  CHECK(p.x_better == render_revision_prompt("Say hi", "Hi!", RevisionDirection::kBetter));
  CHECK_THROWS_AS(render_contrastive_prompts("Say hi", "Hi!", answer.size(), 40), LengthError);
  CHECK_THROWS(render_contrastive_prompts("", "Hi!", 3, 512));
  CHECK_THROWS(render_contrastive_prompts("Say hi", "", 3, 512));
}

TEST_CASE("contrastive reward limits") {
  const std::vector<double> same = {-1.0, -2.5, -0.1};
  for (double r : contrastive_rewards_from_logprobs(same, same).values) CHECK(r == 0.0);
  const std::vector<double> hi = {0.0, -1e6};
  const std::vector<double> lo = {-1e6, 0.0};
  const auto r = contrastive_rewards_from_logprobs(hi, lo).values;
  CHECK(r[0] == 0.5);
  CHECK(r[1] == -0.5);
  const std::vector<double> a = {-0.3, -4.0, -1.2};
  const std::vector<double> b = {-1.3, -2.0, -1.2};
  const auto v = contrastive_rewards_from_logprobs(a, b).values;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_THAT(v[i], WithinAbs(1.0 / (1.0 + std::exp(-(a[i] - b[i]))) - 0.5, 1e-15));
  }
  CHECK_THROWS(contrastive_rewards_from_logprobs(a, std::span(b).first(2)));
}

TEST_CASE("contrastive rewards are bounded and antisymmetric") {
  const auto evaluator = small_model(3).freeze_copy(model::ModelRole::kEvaluator);
  for (const auto& r : data::make_synthetic_planted_task(10, 2)) {
    const auto answer = data::make_response(r.rejected);
    const auto p = render_contrastive_prompts(r.instruction, r.rejected, answer.size(), 192);
    const auto fwd = contrastive_token_rewards(evaluator, p, answer);
    const ContrastivePromptPair swapped{p.x_worse, p.x_better, p.response_offset_worse,
                                        p.response_offset_better};
    const auto rev = contrastive_token_rewards(evaluator, swapped, answer);
    REQUIRE(fwd.size() == answer.size());
    CHECK(fwd.source == RewardSource::kContrastive);
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      CHECK(fwd.values[i] >= -0.5);
      CHECK(fwd.values[i] <= 0.5);
      CHECK(rev.values[i] == -fwd.values[i]);
    }
  }
}

TEST_CASE("two-pass rewards equal position-by-position scoring") {
  const auto evaluator = small_model(5).freeze_copy(model::ModelRole::kEvaluator);
  const auto records = data::make_synthetic_planted_task(3, 9);
  for (const auto& r : records) {
    const auto answer = data::make_response(r.rejected);
    const auto p = render_contrastive_prompts(r.instruction, r.rejected, answer.size(), 192);
    const auto batched = contrastive_token_rewards(evaluator, p, answer);
    for (std::size_t t = 0; t < answer.size(); ++t) {
      data::TokenSeq pb = p.x_better;
      data::TokenSeq pw = p.x_worse;
      pb.insert(pb.end(), answer.begin(), answer.begin() + t);
      pw.insert(pw.end(), answer.begin(), answer.begin() + t);
      const double lb = evaluator.next_token_logprobs(pb)[answer[t]];
      const double lw = evaluator.next_token_logprobs(pw)[answer[t]];
      const double expected = 1.0 / (1.0 + std::exp(-(lb - lw))) - 0.5;
      CHECK_THAT(batched.values[t], WithinAbs(expected, 1e-10));
    }
    CHECK(score_answer(evaluator, r.instruction, r.rejected).values == batched.values);
  }
}

TEST_CASE("implicit rewards at initialization are zero") {
  const auto policy = small_model(7, 64);
  const auto ref = policy.freeze_copy();
  const auto tokens = data::encode("\x02prompt\x03 some response");
  for (double r : dpo_implicit_token_rewards(policy, ref, tokens, 8, 0.1).values) CHECK(r == 0.0);
  CHECK(dpo_sequence_reward(policy, ref, tokens, 8, 0.1) == 0.0);
}

TEST_CASE("implicit rewards scale with beta and sum to the sequence reward") {
  const auto policy = small_model(7, 64);
  const auto ref = small_model(8, 64).freeze_copy();
  const auto w = data::encode("\x02prompt\x03 a preferred answer");
  const auto l = data::encode("\x02prompt\x03 a worse answer");
  const auto r1 = dpo_implicit_token_rewards(policy, ref, w, 8, 0.1);
  const auto r2 = dpo_implicit_token_rewards(policy, ref, w, 8, 0.2);
  CHECK(r1.source == RewardSource::kDpoImplicit);
  double total = 0.0;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK_THAT(r2.values[i], WithinAbs(2.0 * r1.values[i], 1e-15));
    total += r1.values[i];
  }
  CHECK_THAT(dpo_sequence_reward(policy, ref, w, 8, 0.1), WithinAbs(total, 1e-12));
  // Two routes to the reward margin.
  const double margin =
      dpo_sequence_reward(policy, ref, w, 8, 0.1) - dpo_sequence_reward(policy, ref, l, 8, 0.1);
  const double direct = 0.1 * ((policy.sequence_logprob(w, 8) - ref.sequence_logprob(w, 8)) -
                               (policy.sequence_logprob(l, 8) - ref.sequence_logprob(l, 8)));
  CHECK_THAT(margin, WithinAbs(direct, 1e-12));
  CHECK_THROWS_AS(dpo_implicit_token_rewards(policy, ref, w, 8, 0.0), ConfigError);
}

TEST_CASE("implicit rewards require a shared vocabulary") {
  model::ModelConfig c;
  c.vocab_size = data::kVocabSize + 5;
  c.context_len = 64;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  const model::TransformerLM other(c);
  const auto policy = small_model(7, 64);
  const auto tokens = data::encode("\x02prompt\x03 x");
  CHECK_THROWS_AS(dpo_implicit_token_rewards(policy, other.freeze_copy(), tokens, 8, 0.1),
                  ConfigError);
}

TEST_CASE("reward cache keys, round trip and errors") {
  RewardCache cache;
  CHECK(cache.put({"a", ResponseSide::kChosen, RewardSource::kContrastive, "h1", {0.1, -0.2}}));
  CHECK_FALSE(cache.put({"a", ResponseSide::kChosen, RewardSource::kContrastive, "h1", {9.0}}));
  CHECK(cache.put({"a", ResponseSide::kRejected, RewardSource::kContrastive, "h1", {0.3}}));
  CHECK(cache.put({"a", ResponseSide::kChosen, RewardSource::kContrastive, "h2", {0.4}}));
  CHECK(cache.size() == 3);
  CHECK(cache.find("a", ResponseSide::kChosen, RewardSource::kContrastive, "h1")->values ==
        std::vector<double>{0.1, -0.2});
  CHECK_FALSE(cache.find("a", ResponseSide::kChosen, RewardSource::kDpoImplicit, "h1"));
  CHECK_FALSE(cache.find("b", ResponseSide::kChosen, RewardSource::kContrastive, "h1"));

  const auto path = temp_path("cache.jsonl");
  cache.save(path);
  const RewardCache loaded = RewardCache::load(path);
  CHECK(loaded.size() == 3);
  CHECK(loaded.find("a", ResponseSide::kChosen, RewardSource::kContrastive, "h1")->values ==
        std::vector<double>{0.1, -0.2});

  std::ofstream(temp_path("bad.jsonl"))
      << R"({"id":"a","side":"chosen","source":"contrastive","evaluator":"h","rewards":[0]})"
      << "\n{\"id\":\"b\"}\n";
  CHECK_THROWS_WITH(RewardCache::load(temp_path("bad.jsonl")), ContainsSubstring("line 2"));
}

TEST_CASE("annotation is idempotent and thread-count independent") {
  const auto evaluator = small_model(11).freeze_copy(model::ModelRole::kEvaluator);
  auto records = data::make_synthetic_planted_task(6, 13);
  records.push_back({"long", std::string(150, 'a'), "x", "y", {}});
  RewardCache serial;
  const auto first = annotate_contrastive(evaluator, records, serial, 1);
  CHECK(first.computed == 12);
  CHECK(first.skipped_ids == std::vector<std::string>{"long"});
  const auto second = annotate_contrastive(evaluator, records, serial, 1);
  CHECK(second.computed == 0);
  CHECK(second.reused == 12);

  RewardCache parallel;
  annotate_contrastive(evaluator, records, parallel, 3);
  const auto a = serial.entries();
  const auto b = parallel.entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
  const auto& r = records.front();
  CHECK(serial.find(r.id, ResponseSide::kRejected, RewardSource::kContrastive,
                    evaluator.content_hash())
            ->values == score_answer(evaluator, r.instruction, r.rejected).values);
}
