// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/numerics/tape.hpp"

#include <algorithm>

#include "tokreg/errors.hpp"

namespace tokreg::numerics {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::parameter(const Tensor& param) {
  if (auto it = param_ids_.find(&param); it != param_ids_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.external = &param;
  node.requires_grad = training() && param.requires_grad();
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  param_ids_.emplace(&param, id);
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad =
      training() && std::any_of(inputs.begin(), inputs.end(),
                                [this](std::size_t i) { return nodes_[i].requires_grad; });
  if (node.requires_grad) node.backward = std::move(backward);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record_detached(Tensor value, std::size_t input) {
  Node node;
  node.owned = std::move(value);
  node.detached = true;
  node.inputs = {input};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.owned;
}

const Tensor* Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad_of(const Tensor& param) const {
  auto it = param_ids_.find(&param);
  if (it == param_ids_.end()) return nullptr;
  return grad(it->second);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::logic_error("backward() on a Var from another tape");
  if (value(root.id()).size() != 1) {
    throw DimensionError("backward() needs a scalar root, got shape " +
                         shape_to_string(value(root.id()).shape()));
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

}  // namespace tokreg::numerics
