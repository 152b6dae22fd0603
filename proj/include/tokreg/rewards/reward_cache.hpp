// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tokreg/data/records.hpp"
#include "tokreg/model/transformer.hpp"
#include "tokreg/rewards/token_rewards.hpp"

namespace tokreg::rewards {

enum class ResponseSide { kChosen, kRejected };

std::string_view side_name(ResponseSide side) noexcept;
ResponseSide side_from_name(std::string_view name);

/// One cached reward vector. Serialized as a JSON line:
/// {"id", "side", "source", "evaluator", "rewards": [...]}
struct RewardCacheEntry {
  std::string record_id;
  ResponseSide side = ResponseSide::kChosen;
  RewardSource source = RewardSource::kContrastive;
  std::string evaluator_hash;
  std::vector<double> values;
};

/// Token rewards keyed by (record id, side, source, evaluator hash).
///
/// Lookups may run concurrently; insertions are serialized.
class RewardCache {
 public:
  RewardCache() = default;
  RewardCache(const RewardCache& other);
  RewardCache& operator=(const RewardCache& other);

  // Returns false when an entry with the same key already exists.
  bool put(RewardCacheEntry entry);
  std::optional<TokenRewardVector> find(const std::string& record_id, ResponseSide side,
                                        RewardSource source,
                                        const std::string& evaluator_hash) const;
  std::size_t size() const;
  std::vector<RewardCacheEntry> entries() const;

  static RewardCache load(const std::filesystem::path& path);
  // Entries in key order; the file is rewritten in full.
  void save(const std::filesystem::path& path) const;

 private:
  using Key = std::tuple<std::string, int, int, std::string>;
  mutable std::mutex mu_;
  std::map<Key, RewardCacheEntry> entries_;
};

struct AnnotateSummary {
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::vector<std::string> skipped_ids;  // did not fit the evaluator context
};

/// Scores both responses of every record with the frozen evaluator and
/// stores them in `cache`. Entries already present are left untouched, so
/// re-running is a no-op. `threads` > 1 scores records in parallel.
AnnotateSummary annotate_contrastive(const model::TransformerLM& evaluator,
                                     std::span<const data::PreferenceRecord> records,
                                     RewardCache& cache, std::size_t threads = 1);

/// Implicit-reward annotation with a trained policy and its reference. The
/// cache key uses the policy hash.
AnnotateSummary annotate_dpo_implicit(const model::TransformerLM& policy,
                                      const model::TransformerLM& reference,
                                      std::span<const data::PreferenceRecord> records,
                                      double beta, RewardCache& cache);

}  // namespace tokreg::rewards
