// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "tokreg/numerics/tensor.hpp"

namespace tokreg::numerics {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of one computation.
///
/// Nodes are appended in evaluation order; backward() replays them in reverse.
/// A node only keeps its backward rule when at least one input requires a
/// gradient, so inference tapes (Mode::kInference) hold values only.
/// Parameters are bound by address: the tape reads them in place and reports
/// their gradients through grad_of().
class Tape {
 public:
  enum class Mode { kTraining, kInference };
  // Accumulates this node's output gradient into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(Mode mode = Mode::kTraining) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::kTraining; }

  // Binds an external tensor as a leaf. The tensor must outlive the tape and
  // must not change while the tape is in use.
  Var parameter(const Tensor& param);
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  // Same values as the input, but the node passes no gradient upstream.
  Var record_detached(Tensor value, std::size_t input);

  void backward(Var root);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool detached(std::size_t id) const { return nodes_[id].detached; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  // Gradient accumulated at a node, or nullptr when nothing flowed into it.
  const Tensor* grad(std::size_t id) const;
  // Zero-initialised on first use; backward rules accumulate into it.
  Tensor& grad_buffer(std::size_t id);
  const Tensor* grad_of(const Tensor& param) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool detached = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_ids_;
};

}  // namespace tokreg::numerics
