// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include "catch_amalgamated.hpp"
#include "tokreg/data/synthetic.hpp"
#include "tokreg/diagnostics/credit.hpp"
#include "tokreg/diagnostics/heatmap.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/rewards/token_rewards.hpp"

using namespace tokreg;
using namespace tokreg::diagnostics;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.context_len = 48;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.seed = 6;
  return c;
}

std::vector<data::PreferencePair> planted_pairs(std::size_t n, std::uint64_t seed) {
  data::SyntheticTaskOptions opts;
  opts.word_length = 3;
  return data::tokenize_records(data::make_synthetic_planted_task(n, seed, opts), 48);
}

model::TransformerLM perturbed(const model::TransformerLM& base, std::uint64_t seed) {
  model::TransformerLM m = base;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& p : m.mutable_parameters()) {
    for (double& v : p.tensor.data()) v += noise(rng);
  }
  return m;
}

data::TokenSeq rejected_sequence(const data::PreferencePair& p) {
  data::TokenSeq t = p.prompt;
  t.insert(t.end(), p.rejected.begin(), p.rejected.end());
  return t;
}

}  // namespace

TEST_CASE("all-zero rewards use the sign convention") {
  const std::vector<std::vector<double>> rewards = {std::vector<double>(5, 0.0),
                                                    std::vector<double>(4, 0.0)};
  const std::vector<data::Span> spans = {{1, 3}, {0, 1}};
  const CreditMetrics m = credit_metrics_from_rewards(rewards, spans);
  CHECK(m.records == 2);
  CHECK(m.sign_accuracy == 0.5);
  CHECK(m.sign_at_zero);
  CHECK(m.zero_sign_count == 2);
  // Every token ties for the minimum.
  CHECK_THAT(m.localization, WithinAbs((2.0 / 5.0 + 1.0 / 4.0) / 2.0, 1e-15));
  CHECK(m.rank_correlation == 0.0);
}

TEST_CASE("halving the span probability localizes perfectly") {
  // log(pi / pi_ref) = log(1/2) on the span, 0 elsewhere.
  const double half = std::log(0.5);
  const std::vector<std::vector<double>> rewards = {{0, 0, half, half, 0, 0},
                                                    {half, 0, 0}, {0, 0, 0, 0, half}};
  const std::vector<data::Span> spans = {{2, 4}, {0, 1}, {4, 5}};
  const CreditMetrics m = credit_metrics_from_rewards(rewards, spans);
  CHECK(m.sign_accuracy == 1.0);
  CHECK(m.localization == 1.0);
  CHECK_FALSE(m.sign_at_zero);
  CHECK(m.rank_correlation > 0.99);

  // Scaling by any positive constant leaves every metric unchanged.
  auto scaled = rewards;
  for (auto& r : scaled)
    for (double& v : r) v *= 0.1;
  const CreditMetrics s = credit_metrics_from_rewards(scaled, spans);
  CHECK(s.sign_accuracy == m.sign_accuracy);
  CHECK(s.localization == m.localization);
  CHECK(s.rank_correlation == m.rank_correlation);
}

TEST_CASE("credit metrics reject misaligned inputs") {
  const std::vector<std::vector<double>> rewards = {{0.1, -0.2}};
  const std::vector<data::Span> past = {{1, 3}};
  CHECK_THROWS_AS(credit_metrics_from_rewards(rewards, past), DimensionError);
  const std::vector<data::Span> two = {{0, 1}, {0, 1}};
  CHECK_THROWS_AS(credit_metrics_from_rewards(rewards, two), DimensionError);

  const model::TransformerLM m(small_config());
  auto pairs = planted_pairs(3, 1);
  pairs[1].planted_span.reset();
  CHECK_THROWS_AS(credit_metrics(m, m, pairs, 0.1), ConfigError);
}

TEST_CASE("spearman correlation") {
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> b = {10, 20, 30, 40};
  const std::vector<double> c = {4, 3, 2, 1};
  const std::vector<double> flat = {1, 1, 1, 1};
  CHECK_THAT(spearman(a, b), WithinAbs(1.0, 1e-15));
  CHECK_THAT(spearman(a, c), WithinAbs(-1.0, 1e-15));
  CHECK(spearman(a, flat) == 0.0);
  // Ties take average ranks: x ranks {1.5, 1.5, 3}, y ranks {1, 2, 3}.
  const std::vector<double> x = {5, 5, 9};
  const std::vector<double> y = {1, 2, 3};
  CHECK_THAT(spearman(x, y), WithinAbs(std::sqrt(0.75), 1e-12));
}

TEST_CASE("model credit metrics agree with the reward-level computation") {
  const model::TransformerLM ref(small_config());
  const auto policy = perturbed(ref, 3);
  const auto pairs = planted_pairs(20, 2);
  std::vector<std::vector<double>> rewards;
  std::vector<data::Span> spans;
  for (const auto& p : pairs) {
    rewards.push_back(
        rewards::dpo_implicit_token_rewards(policy, ref, rejected_sequence(p), p.prompt_len(), 0.1)
            .values);
    spans.push_back(*p.planted_span);
  }
  const CreditMetrics direct = credit_metrics_from_rewards(rewards, spans);
  const CreditMetrics m = credit_metrics(policy, ref, pairs, 0.1);
  CHECK(m.records == 20);
  CHECK_THAT(m.sign_accuracy, WithinAbs(direct.sign_accuracy, 1e-15));
  CHECK_THAT(m.localization, WithinAbs(direct.localization, 1e-15));
  CHECK_THAT(m.rank_correlation, WithinAbs(direct.rank_correlation, 1e-12));
  // Pure and independent of beta.
  const CreditMetrics again = credit_metrics(policy, ref, pairs, 2.0);
  CHECK(again.sign_accuracy == m.sign_accuracy);
  CHECK(again.localization == m.localization);
  const CreditMetrics at_init = credit_metrics(ref, ref, pairs, 0.1);
  CHECK(at_init.sign_accuracy == 0.5);
  CHECK(at_init.sign_at_zero);
}

TEST_CASE("heatmap values are the unscaled implicit rewards") {
  const model::TransformerLM ref(small_config());
  const auto policy = perturbed(ref, 4);
  const std::string policy_hash = policy.content_hash();
  const auto pair = planted_pairs(1, 3).front();
  const auto records = heatmap_records(policy, ref, pair);
  REQUIRE(records.size() == 2);
  CHECK(records[0].side == "chosen");
  CHECK(records[1].side == "rejected");
  const double beta = 0.3;
  const auto implicit =
      rewards::dpo_implicit_token_rewards(policy, ref, rejected_sequence(pair), pair.prompt_len(), beta);
  const auto& r = records[1];
  REQUIRE(r.values.size() == implicit.size());
  REQUIRE(r.tokens.size() == r.values.size());
  const auto lp = policy.forward_logprobs(rejected_sequence(pair), pair.prompt_len());
  const auto lr = ref.forward_logprobs(rejected_sequence(pair), pair.prompt_len());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    CHECK_THAT(r.values[i], WithinAbs(implicit.values[i] / beta, 1e-12));
    CHECK((r.values[i] > 0) == (lp[i] - lr[i] > 0));
  }
  CHECK(r.tokens.back() == data::token_display(data::kEos));
  CHECK(r.min_value == *std::min_element(r.values.begin(), r.values.end()));
  CHECK(r.max_value == *std::max_element(r.values.begin(), r.values.end()));
  CHECK(r.scale > 0.0);
  CHECK(policy.content_hash() == policy_hash);
}

TEST_CASE("identical models give a neutral heatmap") {
  const model::TransformerLM ref(small_config());
  const auto pair = planted_pairs(1, 4).front();
  for (const auto& r : heatmap_records(ref, ref, pair)) {
    for (double v : r.values) CHECK(v == 0.0);
    CHECK(r.scale == 0.0);
  }
}

TEST_CASE("symmetric scale is the 95th percentile of magnitudes") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i % 2 ? -i : i);
  CHECK(symmetric_scale(v) == 95.0);
  CHECK(symmetric_scale(std::vector<double>{}) == 0.0);
  CHECK(symmetric_scale(std::vector<double>{-3.0}) == 3.0);
}

TEST_CASE("heatmap export") {
  const model::TransformerLM ref(small_config());
  const auto policy = perturbed(ref, 5);
  const auto records = heatmap_records(policy, ref, planted_pairs(1, 5).front());
  const auto j = heatmap_to_json(records);
  const auto back = heatmap_from_json(j);
  REQUIRE(back.size() == records.size());
  CHECK(back[1].values == records[1].values);
  CHECK(back[1].tokens == records[1].tokens);
  CHECK(back[1].source == "log_ratio");
  const std::string html = heatmap_to_html(records);
  CHECK_THAT(html, ContainsSubstring("<html") && ContainsSubstring("220,40,40") &&
                       ContainsSubstring("40,80,220"));
  const auto dir = std::filesystem::temp_directory_path() / "tokreg_test_diag";
  std::filesystem::create_directories(dir);
  const auto written = export_heatmap(records, dir / "pair", HeatmapFormat::kBoth);
  REQUIRE(written.size() == 2);
  for (const auto& p : written) CHECK(std::filesystem::file_size(p) > 0);
  CHECK(heatmap_format_from_name("html") == HeatmapFormat::kHtml);
  CHECK_THROWS_AS(heatmap_format_from_name("png"), ConfigError);
}
