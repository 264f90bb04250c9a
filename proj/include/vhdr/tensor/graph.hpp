#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

/// Named trainable tensors, kept in registration order.
class ParameterStore {
 public:
  void add(std::string name, Tensor value) {
    if (contains(name)) throw DataError("parameter store: duplicate name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  Tensor& at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    throw DataError("parameter store: no parameter '" + name + "'");
  }
  const Tensor& at(const std::string& name) const { return const_cast<ParameterStore*>(this)->at(name); }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  std::size_t size() const noexcept { return entries_.size(); }

  std::int64_t element_count() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : entries_) n += static_cast<std::int64_t>(t.size());
    return n;
  }

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  Tensor* find(const std::string& name) {
    for (auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  const Tensor* find(const std::string& name) const { return const_cast<ParameterStore*>(this)->find(name); }

  std::vector<std::pair<std::string, Tensor>> entries_;
};

using GradientMap = std::map<std::string, Tensor>;
using NodeId = std::size_t;

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in execution order, so every node's inputs precede it and
/// the backward sweep is a plain reverse scan. A graph is used for one forward
/// and one backward pass and then discarded.
class Graph {
 public:
  /// Called with the node's output gradient; accumulates into input gradients
  /// through `Graph::grad`.
  using BackwardFn = std::function<void(Graph&, NodeId self)>;

  NodeId constant(Tensor value) { return push("constant", std::move(value), {}, nullptr, false); }

  NodeId input(Tensor value, bool requires_grad) {
    return push("input", std::move(value), {}, nullptr, requires_grad);
  }

  /// Leaf bound to a named parameter; its gradient is reported by parameter_grads().
  NodeId parameter(const std::string& name, const Tensor& value) {
    const NodeId id = push("parameter", value, {}, nullptr, true);
    params_.emplace_back(name, id);
    return id;
  }

  /// Records an op result. It requires grad iff any input does.
  NodeId record(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
    bool rg = false;
    for (NodeId i : inputs) {
      if (i >= nodes_.size()) throw DataError("graph: op '" + op + "' references unknown node");
      rg = rg || nodes_[i].requires_grad;
    }
    return push(std::move(op), std::move(value), std::move(inputs), rg ? std::move(backward) : nullptr, rg);
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, zero-initialised on first touch.
  Tensor& grad(NodeId id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  bool has_grad(NodeId id) const { return !nodes_.at(id).grad.empty(); }

  /// Adds `g` into the gradient of `id` if that node requires grad.
  void accumulate(NodeId id, const Tensor& g) {
    if (!requires_grad(id)) return;
    Tensor& dst = grad(id);
    if (dst.shape() != g.shape()) {
      throw DataError("graph: gradient shape " + shape_str(g.shape()) + " does not match node shape " +
                      shape_str(dst.shape()));
    }
    auto d = dst.data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }

  void accumulate(NodeId id, Tensor&& g) {
    if (!requires_grad(id)) return;
    Node& n = nodes_.at(id);
    if (n.grad.empty() && g.shape() == n.value.shape()) {
      n.grad = std::move(g);
      return;
    }
    accumulate(id, static_cast<const Tensor&>(g));
  }

  /// Runs the reverse sweep from a scalar loss.
  void backward(NodeId loss) {
    if (loss >= nodes_.size()) throw DataError("graph: unknown loss node");
    if (nodes_[loss].value.size() != 1) {
      throw DataError("backward: loss must be scalar, got shape " + shape_str(nodes_[loss].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss].requires_grad) return;
    grad(loss).fill(1.0f);
    for (std::size_t k = loss + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, k);
      // Interior gradients are not needed once propagated.
      n.grad = Tensor();
    }
  }

  /// Gradient for every registered parameter; zeros for parameters the loss
  /// does not depend on. Parameters registered twice under one name are summed.
  GradientMap parameter_grads() const {
    GradientMap out;
    for (const auto& [name, id] : params_) {
      const Node& n = nodes_[id];
      Tensor g = n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
      auto it = out.find(name);
      if (it == out.end()) {
        out.emplace(name, std::move(g));
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
      }
    }
    return out;
  }

  const Tensor* leaf_grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.grad.empty() ? nullptr : &n.grad;
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  NodeId push(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn fn, bool rg) {
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor(), std::move(inputs), std::move(fn), rg});
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> params_;
};

}  // namespace vhdr
