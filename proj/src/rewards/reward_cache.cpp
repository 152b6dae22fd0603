// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/rewards/reward_cache.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "tokreg/errors.hpp"
#include "tokreg/rewards/contrastive.hpp"

namespace tokreg::rewards {

std::string_view side_name(ResponseSide side) noexcept {
  return side == ResponseSide::kChosen ? "chosen" : "rejected";
}

ResponseSide side_from_name(std::string_view name) {
  if (name == "chosen") return ResponseSide::kChosen;
  if (name == "rejected") return ResponseSide::kRejected;
  throw ParseError("unknown response side \"" + std::string(name) + "\"");
}

RewardCache::RewardCache(const RewardCache& other) {
  std::lock_guard lock(other.mu_);
  entries_ = other.entries_;
}

RewardCache& RewardCache::operator=(const RewardCache& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  entries_ = other.entries_;
  return *this;
}

bool RewardCache::put(RewardCacheEntry entry) {
  Key key{entry.record_id, static_cast<int>(entry.side), static_cast<int>(entry.source),
          entry.evaluator_hash};
  std::lock_guard lock(mu_);
  return entries_.emplace(std::move(key), std::move(entry)).second;
}

std::optional<TokenRewardVector> RewardCache::find(const std::string& record_id,
                                                   ResponseSide side, RewardSource source,
                                                   const std::string& evaluator_hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(Key{record_id, static_cast<int>(side), static_cast<int>(source),
                              evaluator_hash});
  if (it == entries_.end()) return std::nullopt;
  return TokenRewardVector{it->second.values, source};
}

std::size_t RewardCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<RewardCacheEntry> RewardCache::entries() const {
  std::lock_guard lock(mu_);
  std::vector<RewardCacheEntry> out;
  out.reserve(entries_.size());
  for (const auto& [key, e] : entries_) out.push_back(e);
  return out;
}

RewardCache RewardCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open reward cache " + path.string());
  RewardCache cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RewardCacheEntry e;
      e.record_id = j.at("id").get<std::string>();
      e.side = side_from_name(j.at("side").get<std::string>());
      e.source = source_from_name(j.at("source").get<std::string>());
      e.evaluator_hash = j.at("evaluator").get<std::string>();
      e.values = j.at("rewards").get<std::vector<double>>();
      cache.put(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cache;
}

void RewardCache::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write reward cache " + path.string());
  for (const auto& e : entries()) {
    const nlohmann::json j = {{"id", e.record_id},
                              {"side", side_name(e.side)},
                              {"source", source_name(e.source)},
                              {"evaluator", e.evaluator_hash},
                              {"rewards", e.values}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("reward cache write failed: " + path.string());
}

AnnotateSummary annotate_contrastive(const model::TransformerLM& evaluator,
                                     std::span<const data::PreferenceRecord> records,
                                     RewardCache& cache, std::size_t threads) {
  const std::string hash = evaluator.content_hash();
  AnnotateSummary summary;
  std::vector<const data::PreferenceRecord*> todo;
  for (const auto& r : records) {
    const bool have_both =
        cache.find(r.id, ResponseSide::kChosen, RewardSource::kContrastive, hash) &&
        cache.find(r.id, ResponseSide::kRejected, RewardSource::kContrastive, hash);
    if (have_both) {
      summary.reused += 2;
    } else {
      todo.push_back(&r);
    }
  }

  struct Result {
    std::optional<TokenRewardVector> chosen, rejected;
  };
  std::vector<Result> results(todo.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < todo.size(); i += stride) {
      try {
        results[i].chosen = score_answer(evaluator, todo[i]->instruction, todo[i]->chosen);
        results[i].rejected = score_answer(evaluator, todo[i]->instruction, todo[i]->rejected);
      } catch (const LengthError&) {
        results[i] = {};
      }
    }
  };
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }

  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (!results[i].chosen || !results[i].rejected) {
      summary.skipped_ids.push_back(todo[i]->id);
      continue;
    }
    for (auto [side, vec] : {std::pair{ResponseSide::kChosen, &results[i].chosen},
                             std::pair{ResponseSide::kRejected, &results[i].rejected}}) {
      if (cache.put({todo[i]->id, side, RewardSource::kContrastive, hash, (*vec)->values})) {
        ++summary.computed;
      } else {
        ++summary.reused;
      }
    }
  }
  return summary;
}

AnnotateSummary annotate_dpo_implicit(const model::TransformerLM& policy,
                                      const model::TransformerLM& reference,
                                      std::span<const data::PreferenceRecord> records,
                                      double beta, RewardCache& cache) {
  const std::string hash = policy.content_hash();
  const auto ctx = static_cast<std::size_t>(policy.config().context_len);
  AnnotateSummary summary;
  for (const auto& r : records) {
    data::PreferencePair pair;
    try {
      pair = data::tokenize_record(r, ctx);
    } catch (const LengthError&) {
      summary.skipped_ids.push_back(r.id);
      continue;
    }
    for (ResponseSide side : {ResponseSide::kChosen, ResponseSide::kRejected}) {
      if (cache.find(r.id, side, RewardSource::kDpoImplicit, hash)) {
        ++summary.reused;
        continue;
      }
      data::TokenSeq seq = pair.prompt;
      const auto& resp = side == ResponseSide::kChosen ? pair.chosen : pair.rejected;
      seq.insert(seq.end(), resp.begin(), resp.end());
      auto rv = dpo_implicit_token_rewards(policy, reference, seq, pair.prompt_len(), beta);
      cache.put({r.id, side, RewardSource::kDpoImplicit, hash, std::move(rv.values)});
      ++summary.computed;
    }
  }
  return summary;
}

}  // namespace tokreg::rewards
