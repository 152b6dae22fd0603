// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "tokreg/data/batching.hpp"
#include "tokreg/data/records.hpp"
#include "tokreg/data/synthetic.hpp"
#include "tokreg/data/tokenizer.hpp"
#include "tokreg/errors.hpp"

using namespace tokreg;
using namespace tokreg::data;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tokreg_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<PreferenceRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_records(in);
}

}  // namespace

TEST_CASE("byte tokenizer round trip") {
  const std::string text = "Copy: h\xC3\xA9llo \n\t\x01\xFF end";
  const TokenSeq tokens = encode(text);
  CHECK(tokens.size() == text.size());
  CHECK(decode(tokens) == text);
  for (int t : tokens) CHECK((t >= 0 && t < kByteTokens));
}

TEST_CASE("control and template tokens") {
  TokenSeq seq = {kBos, 'a', kSep, template_token(TemplateSegment::kRewrittenOpen), kEos};
  const std::string decoded = decode(seq);
  CHECK(decoded.find('a') == 0);
  CHECK(decoded.substr(1) == template_segment_text(TemplateSegment::kRewrittenOpen));
  CHECK(is_template_token(template_token(TemplateSegment::kPreamble)));
  CHECK_FALSE(is_template_token(kEos));
  CHECK(token_display(kEos) == "<eos>");
  const TokenSeq bad = {kVocabSize};
  CHECK_THROWS_AS(decode(bad), IndexError);
}

TEST_CASE("load_records on an empty file") {
  const auto path = temp_path("empty.jsonl");
  std::ofstream(path).close();
  CHECK(load_records(path).empty());
}

TEST_CASE("a record missing rejected names the field") {
  CHECK_THROWS_WITH(parse(R"({"id":"a","instruction":"x","chosen":"y"})"),
                    ContainsSubstring("rejected") && ContainsSubstring("line 1"));
  CHECK_THROWS_AS(parse(R"({"id":"a","instruction":"x","chosen":"y"})"), ParseError);
}

TEST_CASE("malformed lines and duplicates carry line numbers") {
  const std::string good = R"({"id":"a","instruction":"x","chosen":"y","rejected":"z"})";
  CHECK_THROWS_WITH(parse(good + "\n{not json\n"), ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(parse(good + "\n\n" + good + "\n"),
                    ContainsSubstring("line 3") && ContainsSubstring("duplicate"));
  CHECK_THROWS_AS(parse(R"({"id":"a","instruction":"x","chosen":"y","rejected":"y"})"),
                  ParseError);
  CHECK_THROWS_AS(
      parse(R"({"id":"a","instruction":"x","chosen":"y","rejected":"z","planted_span":[0,5]})"),
      ParseError);
}

TEST_CASE("write then load preserves every field") {
  auto records = make_synthetic_planted_task(50, 3);
  records.push_back({"odd \"id\"", "tab\there\nnewline", "\xC3\xA9t\xC3\xA9", "\\ back", {}});
  const auto path = temp_path("roundtrip.jsonl");
  write_records(path, records);
  const auto loaded = load_records(path);
  CHECK(loaded == records);
  write_records(temp_path("roundtrip2.jsonl"), loaded);
  std::ifstream a(path), b(temp_path("roundtrip2.jsonl"));
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("planted pairs differ only inside the span") {
  const auto records = make_synthetic_planted_task(300, 11);
  for (const auto& r : records) {
    REQUIRE(r.planted_span);
    const Span s = *r.planted_span;
    REQUIRE(r.chosen.size() == r.rejected.size());
    CHECK(s.size() >= 1);
    for (std::size_t i = 0; i < r.chosen.size(); ++i) {
      if (!s.contains(i)) CHECK(r.chosen[i] == r.rejected[i]);
    }
    CHECK(r.chosen[s.start] != r.rejected[s.start]);
    CHECK(r.chosen[s.end - 1] != r.rejected[s.end - 1]);
  }
}

TEST_CASE("synthetic generation is deterministic in its seed") {
  CHECK(make_synthetic_planted_task(100, 5) == make_synthetic_planted_task(100, 5));
  CHECK(make_synthetic_planted_task(100, 5) != make_synthetic_planted_task(100, 6));
  std::set<std::string> ids;
  for (const auto& r : make_synthetic_planted_task(100, 5)) ids.insert(r.id);
  CHECK(ids.size() == 100);
}

TEST_CASE("flipping the span reverses the preference") {
  for (const auto& r : make_synthetic_planted_task(200, 12)) {
    const Span s = *r.planted_span;
    CHECK(synthetic_prefers(r.instruction, r.chosen, r.rejected));
    CHECK_FALSE(synthetic_prefers(r.instruction, r.rejected, r.chosen));
    std::string chosen = r.chosen;
    std::string rejected = r.rejected;
    for (std::size_t i = s.start; i < s.end; ++i) std::swap(chosen[i], rejected[i]);
    CHECK(synthetic_prefers(r.instruction, rejected, chosen));
    // Bytes outside the span never change the label.
    std::string outside = r.rejected;
    outside.replace(0, kSyntheticAnswerPrefix.size(), kSyntheticAnswerPrefix);
    CHECK(synthetic_error_count(r.instruction, outside) ==
          synthetic_error_count(r.instruction, r.rejected));
  }
}

TEST_CASE("tokenized records") {
  const auto records = make_synthetic_planted_task(20, 4);
  for (const auto& r : records) {
    const PreferencePair p = tokenize_record(r, 64);
    CHECK(p.prompt.front() == kBos);
    CHECK(p.prompt.back() == kSep);
    CHECK(p.chosen.back() == kEos);
    CHECK(p.rejected.back() == kEos);
    CHECK(decode(p.rejected) == r.rejected);
    REQUIRE(p.planted_span);
    for (std::size_t i = 0; i < p.rejected.size(); ++i) {
      CHECK((p.chosen[i] != p.rejected[i]) == p.planted_span->contains(i));
    }
  }
  CHECK_THROWS_AS(tokenize_record(records.front(), 10), LengthError);
}

TEST_CASE("batch size one covers every pair once per epoch") {
  BatchIterator it(17, 1, 3, false);
  std::vector<std::size_t> seen;
  while (auto b = it.next()) {
    REQUIRE(b->size() == 1);
    seen.push_back(b->front());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 17; ++i) CHECK(seen[i] == i);
  CHECK(it.next().has_value());
  CHECK(it.epoch() == 1);
}

TEST_CASE("batch order depends only on seed and step") {
  CHECK(epoch_order(40, 9, 0) == epoch_order(40, 9, 0));
  CHECK(epoch_order(40, 9, 0) != epoch_order(40, 9, 1));
  CHECK(epoch_order(40, 9, 0) != epoch_order(40, 10, 0));
  CHECK(batches_per_epoch(10, 4, true) == 2);
  CHECK(batches_per_epoch(10, 4, false) == 3);
  BatchIterator it(10, 4, 9, true);
  std::size_t step = 0;
  for (int epoch = 0; epoch < 3; ++epoch) {
    while (auto b = it.next()) CHECK(*b == batch_at(10, 4, 9, true, step++));
  }
  CHECK(step == 6);
}

TEST_CASE("pair batches put chosen first then rejected") {
  const auto records = make_synthetic_planted_task(3, 8);
  const auto pairs = tokenize_records(records, 64);
  const std::vector<std::size_t> idx = {2, 0};
  const SequenceBatch b = pack_pairs(pairs, idx, kPad, 50);
  CHECK(b.batch == 4);
  CHECK(b.seq_len == 50);
  CHECK(b.response_length(0) == pairs[2].chosen.size());
  CHECK(b.response_length(3) == pairs[0].rejected.size());
  CHECK(b.lengths[1] == pairs[0].prompt.size() + pairs[0].chosen.size());
  CHECK(b.tokens[b.seq_len * 1 + b.lengths[1]] == kPad);
  CHECK(b.prompt_lens[2] == pairs[2].prompt_len());
}
