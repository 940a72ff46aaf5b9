#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/nn/tensor.hpp"

namespace ee::nn {

/// A trainable tensor. `grad` is accumulated by Graph::backward and cleared
/// by the optimizer; it is mutable so that read-only models can still take
/// part in a recorded forward pass.
struct Parameter {
  std::string name;
  Tensor value;
  mutable Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() const {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
};

class Graph;

using NodeId = std::size_t;

/// Handle to a recorded value.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape; }
};

/// Tape of tensor-valued nodes for reverse-mode differentiation. Nodes are
/// appended in evaluation order, so reverse insertion order is a valid
/// topological order for the backward sweep.
class Graph {
 public:
  using Backward = std::function<void(Graph&, NodeId)>;

  Var constant(Tensor t) { return push(std::move(t), "const", nullptr); }

  Var parameter(const Parameter& p) {
    const Parameter* ptr = &p;
    return push(p.value, "param:" + p.name, [ptr](Graph& g, NodeId self) {
      if (ptr->grad.shape != ptr->value.shape) ptr->zero_grad();
      const Tensor& gr = g.grad(self);
      for (std::size_t i = 0; i < gr.size(); ++i) ptr->grad.data[i] += gr.data[i];
    });
  }

  /// Adds an op node. `backward` reads grad(self) and accumulates into the
  /// grads of its inputs.
  Var record(Tensor value, std::string op, Backward backward) {
    return push(std::move(value), std::move(op), std::move(backward));
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(NodeId id) {
    Node& n = nodes_.at(id);
    if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  bool has_grad(NodeId id) const { return nodes_.at(id).grad.shape == nodes_.at(id).value.shape; }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. Throws
  /// NumericalError naming the node whose gradient is not finite.
  void backward(Var loss) {
    if (loss.graph != this) throw Error("Graph::backward: variable belongs to another graph");
    if (value(loss.id).size() != 1) throw ShapeError("Graph::backward: loss must be a scalar");
    grad(loss.id).data[0] += 1.0;
    for (NodeId id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!has_grad(id) || !n.backward) continue;
      if (!n.grad.all_finite())
        throw NumericalError("non-finite gradient at node " + std::to_string(id) + " (" + n.op + ")");
      n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::string op;
    Backward backward;
  };

  Var push(Tensor t, std::string op, Backward bw) {
    nodes_.push_back(Node{std::move(t), Tensor(), std::move(op), std::move(bw)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace ee::nn
