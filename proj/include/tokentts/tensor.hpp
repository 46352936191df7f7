// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Reverse-mode autodiff over dense float32 matrices. Every tensor is 2-D
// (scalars are 1x1, waveforms are [T,1], frame features are [T,d]). Ops live
// in ops.hpp; this header is the tape machinery only.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tokentts/common.hpp"

namespace tts {

namespace detail {

struct Node {
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily during backward
  int rows = 0;
  int cols = 0;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    auto n = std::make_shared<detail::Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(static_cast<size_t>(rows) * cols, 0.0f);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(std::vector<float> data, int rows, int cols, bool requires_grad = false) {
    check(static_cast<size_t>(rows) * cols == data.size(), "Tensor::from: size mismatch");
    auto n = std::make_shared<detail::Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(float v) { return from({v}, 1, 1, false); }

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  int64_t numel() const { return static_cast<int64_t>(n_->rows) * n_->cols; }

  std::vector<float>& data() { return n_->value; }
  const std::vector<float>& data() const { return n_->value; }

  // Gradient buffer; allocated (zero) on first access.
  std::vector<float>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }

  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  float item() const {
    check(numel() == 1, "item(): tensor is not scalar");
    return n_->value[0];
  }

  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0f);
  }

  std::shared_ptr<detail::Node> node() const { return n_; }

  // Backpropagate from this scalar. Gradients accumulate into every reachable
  // node that requires grad (parameter grads must be zeroed by the caller
  // between steps).
  void backward() const {
    check(defined() && numel() == 1, "backward(): root must be a defined scalar");
    if (!n_->requires_grad) return;

    // iterative post-order DFS for topological order (parents before children)
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        detail::Node* p = node->parents[idx++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    n_->ensure_grad();
    n_->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (node->backward_fn) {
        node->ensure_grad();
        node->backward_fn(*node);
      }
    }
  }

 private:
  std::shared_ptr<detail::Node> n_;
};

// Builds an op result node. The backward closure reads self.grad and
// accumulates into self.parents[i]->grad (call ensure_grad() first).
inline Tensor make_op(int rows, int cols, std::vector<float> value,
                      const std::vector<Tensor>& parents,
                      std::function<void(detail::Node&)> backward_fn) {
  check(static_cast<size_t>(rows) * cols == value.size(), "make_op: size mismatch");
  auto n = std::make_shared<detail::Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  if (detail::grad_mode()) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(n));
}

}  // namespace tts
