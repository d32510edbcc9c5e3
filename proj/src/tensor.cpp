// SPDX-License-Identifier: Apache-2.0
#include "refvos/tensor.hpp"

#include <string>
#include <unordered_set>
#include <utility>

namespace refvos {

template <typename Scalar>
void backward(const Var<Scalar>& root) {
  using NodePtr = Node<Scalar>*;
  if (!root.defined() || !root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix<Scalar>::Ones(root.rows(), root.cols()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr node = *it;
    if (!node->backward || node->grad.size() == 0) continue;
    node->backward(*node);
    if (!node->grad.allFinite()) {
      throw NumericError(std::string("non-finite gradient produced by ") + node->op);
    }
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace refvos
