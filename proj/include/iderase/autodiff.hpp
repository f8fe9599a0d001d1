#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "iderase/tensor.hpp"

namespace iderase {

// Define-by-run reverse-mode autodiff over Tensor<T>. A forward pass builds a
// graph of shared_ptr nodes; backward() walks it in reverse creation order
// (creation order is a topological order since parents exist before
// children). Single logical thread owns a graph; gradients accumulate into
// node.grad.
//
// Ops only record parents/backprop closures when some input needs gradients,
// so frozen-network inference detaches automatically.

template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // allocated on first accumulation
  bool needs_grad = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backprop;

  Tensor<T>& ensure_grad() {
    if (grad.v.empty() && val.numel() > 0) grad = Tensor<T>::zeros(val.shape);
    if (grad.v.empty() && val.numel() == 0) grad = Tensor<T>(val.shape);
    return grad;
  }

  void zero_grad() {
    if (!grad.v.empty()) std::fill(grad.v.begin(), grad.v.end(), T(0));
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
inline std::uint64_t next_node_order() {
  static std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  n->needs_grad = requires_grad;
  n->order = detail::next_node_order();
  return n;
}

template <class T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void()> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  n->order = detail::next_node_order();
  bool ng = false;
  for (const auto& p : parents) ng = ng || p->needs_grad;
  n->needs_grad = ng;
  if (ng) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

// Cut the graph: same value, no history.
template <class T>
Var<T> detach(const Var<T>& x) {
  return make_leaf<T>(x->val, false);
}

// Backpropagate d(root)/d(everything) from a scalar root. Seeds the root
// gradient with 1.
template <class T>
void backward(const Var<T>& root, T seed = T(1)) {
  check(root->val.numel() == 1, "backward() root must be a scalar");
  if (!root->needs_grad) return;

  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    topo.push_back(n);
    for (const auto& p : n->parents) {
      if (p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(topo.begin(), topo.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });

  root->ensure_grad().v[0] += seed;
  for (Node<T>* n : topo) {
    if (n->backprop && !n->grad.v.empty()) n->backprop();
  }
}

}  // namespace iderase
