// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/data/batching.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tokreg::data {

SequenceBatch pack_sequences(std::span<const SequenceRef> seqs, int pad_token,
                             std::size_t min_seq_len) {
  SequenceBatch b;
  b.batch = seqs.size();
  std::size_t longest = min_seq_len;
  for (const auto& s : seqs) {
    if (s.prompt.empty()) throw std::invalid_argument("pack_sequences: empty prompt");
    longest = std::max(longest, s.prompt.size() + s.response.size());
  }
  b.seq_len = longest;
  b.tokens.assign(b.batch * b.seq_len, pad_token);
  b.lengths.reserve(b.batch);
  b.prompt_lens.reserve(b.batch);
  b.response_offsets.reserve(b.batch + 1);
  b.response_offsets.push_back(0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    int* row = b.tokens.data() + i * b.seq_len;
    std::copy(seqs[i].prompt.begin(), seqs[i].prompt.end(), row);
    std::copy(seqs[i].response.begin(), seqs[i].response.end(), row + seqs[i].prompt.size());
    b.lengths.push_back(seqs[i].prompt.size() + seqs[i].response.size());
    b.prompt_lens.push_back(seqs[i].prompt.size());
    b.response_offsets.push_back(b.response_offsets.back() + seqs[i].response.size());
  }
  return b;
}

SequenceBatch pack_pairs(std::span<const PreferencePair> pairs,
                         std::span<const std::size_t> indices, int pad_token,
                         std::size_t min_seq_len) {
  std::vector<SequenceRef> refs;
  refs.reserve(2 * indices.size());
  for (std::size_t i : indices) refs.push_back({pairs[i].prompt, pairs[i].chosen});
  for (std::size_t i : indices) refs.push_back({pairs[i].prompt, pairs[i].rejected});
  return pack_sequences(refs, pad_token, min_seq_len);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size, bool drop_last) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  return drop_last ? n / batch_size : (n + batch_size - 1) / batch_size;
}

std::vector<std::size_t> batch_at(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                  bool drop_last, std::size_t step) {
  const std::size_t per_epoch = batches_per_epoch(n, batch_size, drop_last);
  if (per_epoch == 0) throw std::invalid_argument("dataset smaller than one batch");
  const std::vector<std::size_t> order = epoch_order(n, seed, step / per_epoch);
  const std::size_t begin = (step % per_epoch) * batch_size;
  const std::size_t end = std::min(n, begin + batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin),
          order.begin() + static_cast<std::ptrdiff_t>(end)};
}

BatchIterator::BatchIterator(std::size_t n_items, std::size_t batch_size, std::uint64_t seed,
                             bool drop_last)
    : n_(n_items), batch_size_(batch_size), seed_(seed), drop_last_(drop_last) {
  if (batch_size_ == 0) throw std::invalid_argument("batch_size must be >= 1");
  order_ = epoch_order(n_, seed_, epoch_);
}

std::optional<std::vector<std::size_t>> BatchIterator::next() {
  const std::size_t remaining = n_ - cursor_;
  if (remaining == 0 || (drop_last_ && remaining < batch_size_)) {
    ++epoch_;
    cursor_ = 0;
    order_ = epoch_order(n_, seed_, epoch_);
    return std::nullopt;
  }
  const std::size_t take = std::min(batch_size_, remaining);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return out;
}

}  // namespace tokreg::data
