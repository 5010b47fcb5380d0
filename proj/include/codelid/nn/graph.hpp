#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "codelid/nn/tensor.hpp"

namespace codelid::nn {

struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
// acyclic by construction and backward() visits it in reverse. Parameter
// leaves accumulate into Parameter::grad; a parameter that never reaches the
// loss keeps whatever zero_grad() left there.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var out)>;

  Var constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, false, {}});
    return {nodes_.size() - 1};
  }

  // Read-only leaf referring to `value` without copying; it must outlive
  // the graph.
  Var constant_ref(const Tensor<T>& value) {
    nodes_.push_back(Node{{}, &value, nullptr, {}, false, false, {}});
    return {nodes_.size() - 1};
  }

  Var parameter(Parameter<T>& p) {
    if (p.grad.shape != p.value.shape) p.zero_grad();
    nodes_.push_back(Node{{}, nullptr, &p, {}, true, false, {}});
    return {nodes_.size() - 1};
  }

  // Records an op output. `backward` reads grad(out) and accumulates into
  // the grads of whichever inputs requires_grad().
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, needs, false, needs ? std::move(backward) : Backward{}});
    return {nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.param) return n.param->value;
    return n.ref ? *n.ref : n.value;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient buffer of `v`, zero-initialized on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.param) return n.param->grad;
    if (!n.grad_ready) {
      n.grad = Tensor<T>(value(v).shape);
      n.grad_ready = true;
    }
    return n.grad;
  }

  bool has_grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param != nullptr || n.grad_ready;
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) throw std::invalid_argument("backward() needs a scalar loss");
    if (!requires_grad(loss)) return;
    grad(loss).data[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || !n.grad_ready) continue;
      n.backward(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref;
    Parameter<T>* param;
    Tensor<T> grad;
    bool requires_grad;
    bool grad_ready;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace codelid::nn
