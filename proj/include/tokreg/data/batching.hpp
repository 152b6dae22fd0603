// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tokreg/data/records.hpp"

namespace tokreg::data {

/// Right-padded batch of prompt+response sequences.
///
/// Sequence b occupies tokens [b*seq_len, (b+1)*seq_len); positions at or past
/// lengths[b] hold padding and are excluded from every loss. Response tokens
/// are enumerated in batch order: sequence b owns the flattened response
/// positions [response_offsets[b], response_offsets[b+1]).
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<int> tokens;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> prompt_lens;
  std::vector<std::size_t> response_offsets;

  std::size_t response_tokens() const noexcept {
    return response_offsets.empty() ? 0 : response_offsets.back();
  }
  std::size_t response_length(std::size_t b) const {
    return response_offsets[b + 1] - response_offsets[b];
  }
};

struct SequenceRef {
  std::span<const int> prompt;
  std::span<const int> response;
};

/// Packs sequences into one padded batch. `pad_token` fills padding and
/// `min_seq_len` widens the padded length; neither affects any log-prob.
SequenceBatch pack_sequences(std::span<const SequenceRef> seqs, int pad_token = kPad,
                             std::size_t min_seq_len = 0);

/// Pair batch layout: chosen responses of `indices` first, then rejected
/// responses in the same order (2 * indices.size() sequences).
SequenceBatch pack_pairs(std::span<const PreferencePair> pairs,
                         std::span<const std::size_t> indices, int pad_token = kPad,
                         std::size_t min_seq_len = 0);

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size, bool drop_last);

/// Indices of the `step`-th batch counted from the start of training. Pure:
/// resuming at any step reproduces the same stream.
std::vector<std::size_t> batch_at(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                  bool drop_last, std::size_t step);

/// Streams index batches epoch by epoch.
class BatchIterator {
 public:
  BatchIterator(std::size_t n_items, std::size_t batch_size, std::uint64_t seed, bool drop_last);

  // Next batch of the current epoch, or nullopt when the epoch is exhausted;
  // the following call starts the next epoch.
  std::optional<std::vector<std::size_t>> next();
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace tokreg::data
