#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "textshield/grad/tensor.hpp"

namespace textshield::grad {

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  EmbeddingLookup,      // (table[V,k]) + attrs.indices -> [n,k]
  Affine,               // (x[.,in], W[out,in], b[out]?) -> x W^T + b
  Conv1d,               // (x[L,k], filters[F,w*k], b[F]) + attrs.width
  MaxPoolTime,          // x[T,F] -> [F]
  Relu,
  Sigmoid,
  Tanh,
  Add,
  Mul,                  // attrs.lrp_signal names the operand keeping relevance
  Concat,               // along the last axis
  Slice,                // attrs.axis in {0, 1}, [begin, end)
  Softmax,              // along the last axis
  SoftmaxCrossEntropy,  // (logits[B,C] or [C]) + attrs.indices labels -> mean
};

std::string_view to_string(OpKind kind);

enum class BackwardMode { Standard, Guided };

struct OpAttrs {
  std::vector<std::size_t> indices;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width = 0;
  std::size_t lrp_signal = 1;
};

struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<NodeId> parents;
  OpAttrs attrs;
  Tensor value;
  bool requires_grad = false;
  // Max-pool winners, one per output column.
  std::vector<std::size_t> argmax;
};

using GradientMap = std::map<NodeId, Tensor>;

// Append-only record of a forward computation. Every parent id precedes its
// child, so append order is a valid topological order. Once recording stops
// the tape can be read concurrently.
class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = true);

  // Generic entry point; the named helpers below forward here.
  NodeId forward(OpKind kind, std::span<const NodeId> inputs,
                 OpAttrs attrs = {});

  NodeId lookup(NodeId table, std::vector<std::size_t> ids);
  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  NodeId linear(NodeId x, NodeId weight);
  NodeId conv1d(NodeId x, NodeId filters, NodeId bias, std::size_t width);
  NodeId max_pool_time(NodeId x);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b, std::size_t lrp_signal = 1);
  NodeId concat(std::span<const NodeId> parts);
  NodeId slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end);
  // Single element of a rank-1 tensor, as a scalar node.
  NodeId pick(NodeId x, std::size_t index);
  NodeId softmax(NodeId x);
  NodeId softmax_cross_entropy(NodeId logits, std::vector<std::size_t> labels);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Reverse-mode gradients of a scalar node with respect to every leaf that
  // requires a gradient. Guided mode zeroes the gradient passed through a
  // rectifier wherever its input was <= 0 or the incoming gradient is <= 0.
  GradientMap backward(NodeId output,
                       BackwardMode mode = BackwardMode::Standard) const;

  // Epsilon-rule layer-wise relevance propagation seeded with the value of a
  // scalar node. Returns relevance for every leaf reached through an
  // activation path (parameters receive none).
  GradientMap lrp_relevance(NodeId output, double epsilon = 1e-6) const;

  // Recomputes every node from the leaf values.
  std::vector<Tensor> replay() const;

 private:
  Tensor compute(const Node& proto, std::vector<std::size_t>* argmax) const;

  std::vector<Node> nodes_;
};

}  // namespace textshield::grad
