// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tokreg/numerics/tape.hpp"

namespace tokreg::numerics {

// Scalar helpers shared by the tape ops and the forward-only code paths.
double stable_sigmoid(double x) noexcept;
double stable_log_sigmoid(double x) noexcept;
// log(sum(exp(row))) using the max-subtraction form.
double log_sum_exp(std::span<const double> row) noexcept;

/// Matrix product of rank-2 tensors. Throws DimensionError naming both shapes.
Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// x[N x M] + bias[M] broadcast over rows.
Var add_row(Var x, Var bias);

// Rows of table[V x d] selected by ids; out-of-range ids raise IndexError.
Var embedding(Var table, std::span<const int> ids);
Var gather_rows(Var x, std::span<const std::size_t> rows);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// tanh approximation.
Var gelu(Var x);

/// Multi-head causal self-attention over a padded batch.
///
/// qkv holds [q | k | v] for batch*seq_len rows, each of width 3*d. Sequence b
/// occupies rows [b*seq_len, (b+1)*seq_len) and only its first lengths[b]
/// positions are valid; outputs at padded positions are zero and padded keys
/// are never attended to.
Var causal_attention(Var qkv, std::span<const std::size_t> lengths, std::size_t seq_len,
                     std::size_t n_heads);

/// log_softmax(logits[i, :])[targets[i]] for every row, max-subtracted.
Var log_softmax_gather(Var logits, std::span<const int> targets);

Var sigmoid(Var x);
Var log_sigmoid(Var x);

/// Value copy whose node blocks all gradient flow to x.
Var detach(Var x);

inline constexpr std::size_t kNoSegment = std::numeric_limits<std::size_t>::max();

/// out[s] = sum over i with segment_of[i] == s of weights[i] * x[i].
/// Entries with segment kNoSegment are ignored.
Var segment_sum(Var x, std::span<const std::size_t> segment_of, std::span<const double> weights,
                std::size_t n_segments);

Var sum(Var x);
Var mean(Var x);

/// Test fixture hook: perturbs one backward rule so gradient checks can be
/// shown to fail. Never enabled outside diagnostics.
enum class BackwardFault { kNone, kSigmoid, kLogSoftmaxGather, kMatmul };
void inject_backward_fault(BackwardFault fault) noexcept;
BackwardFault active_backward_fault() noexcept;

}  // namespace tokreg::numerics
