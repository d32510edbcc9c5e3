// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over dense row-major matrices.
//
// A Var is a shared handle to a graph node holding a value and, after
// backward(), the gradient of the root with respect to that value. Every
// tensor in the model is two-dimensional: a C x H x W feature map is stored
// pixel-major as an (H*W) x C matrix, a vector of width D as 1 x D.
#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "refvos/errors.hpp"

namespace refvos {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";
  bool requires_grad = false;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  const std::shared_ptr<Node>& in(std::size_t i) const { return inputs[i]; }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() { return detail::grad_enabled; }

// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(Matrix<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Var scalar(Scalar v) {
    Matrix<Scalar> m(1, 1);
    m(0, 0) = v;
    return Var(std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix<Scalar>& value() const { return node_->value; }
  // Direct write access; only meaningful for leaves (parameters).
  Matrix<Scalar>& mutable_value() { return node_->value; }
  const Matrix<Scalar>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  Scalar item() const { return node_->value(0, 0); }
  const char* op() const { return node_->op; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

// Builds the result node of an op. The finiteness check runs on every op so a
// NaN is reported at the op that produced it rather than at the loss.
template <typename Scalar>
Var<Scalar> make_op(const char* op, Matrix<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                    std::function<void(Node<Scalar>&)> backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(backward);
    }
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
Var<Scalar> make_op(const char* op, Matrix<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                    std::function<void(Node<Scalar>&)> backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(backward);
    }
  }
  return Var<Scalar>(std::move(node));
}

// Accumulates d(root)/d(node) into every reachable node that requires grad.
// The root is seeded with ones, so a 1x1 root yields plain gradients.
template <typename Scalar>
void backward(const Var<Scalar>& root);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace refvos
