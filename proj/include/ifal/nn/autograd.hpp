// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ifal/nn/tensor.hpp"

namespace ifal::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the recorded computation. `backward` reads `grad` of this node
// and accumulates into the grads of `parents`.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  // Adds `g` into grad, allocating zeros on first use.
  void accumulate(const Tensor& g);
  Tensor& grad_slot();
};

// Handle to a node of the tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool defined() const { return static_cast<bool>(node_); }

  const NodePtr& node() const { return node_; }

  // Builds a result node. The result requires grad iff any parent does; when none
  // does, `backward_fn` is dropped so inference builds no tape.
  static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

 private:
  NodePtr node_;
};

// While alive on this thread, ops record no tape (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Constant (never differentiated) leaf.
inline Var constant(Tensor t) { return Var(std::move(t), false); }

// Reverse sweep from a one-element loss. Gradients accumulate into every reachable
// node with requires_grad; leaves keep theirs, intermediates are discarded with the graph.
void backward(const Var& loss);

}  // namespace ifal::nn
