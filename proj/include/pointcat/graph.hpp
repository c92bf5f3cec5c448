#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pointcat/tensor.hpp"

namespace pointcat {

using NodeId = Index;

enum class OpKind {
  kLeaf,
  kMatmul,
  kTranspose,
  kAdd,
  kMultiply,
  kSubtract,
  kScalarScale,
  kRelu,
  kExp,
  kLog,
  kSoftmaxLastDim,
  kMaxPoolPoints,
  kBatchNorm,
  kConcatLastDim,
  kReshape,
  kSum,
  kMean,
  kL2Norm,
  kCosineSimilarity,
  kGatherRows,
  kRowL2Normalize,
  kRowDot,
  kRowLogSumExpMasked,
  kRowL2Clip,
  kLogitMargin,
};

const char* op_name(OpKind kind);

/// One operation record. Caches hold whatever the op's backward pass needs
/// (batch-norm statistics, arg-max positions, per-row norms).
struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<NodeId> inputs;
  Tensor out;

  double scalar = 0.0;        // scale factor / clip radius / eps, depending on op
  int label = -1;             // logit-margin target class
  bool flag = false;          // batch-norm training mode
  std::vector<Index> ints;    // gather indices or arg-max cache
  Tensor aux;                 // constant mask for masked log-sum-exp
  Tensor cache_a, cache_b, cache_c;
};

/// Gradients keyed by node id, produced by Graph::backward.
class GradientMap {
 public:
  explicit GradientMap(std::size_t n) : grads_(n) {}

  bool has(NodeId id) const { return grads_[static_cast<std::size_t>(id)].has_value(); }
  const Tensor& at(NodeId id) const;
  void accumulate(NodeId id, const Tensor& g);
  Tensor& slot(NodeId id, const Tensor& like);

 private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Append-only reverse-mode tape. Forward values are computed eagerly when a
/// node is appended; inputs always reference earlier nodes, so the node list
/// is topologically ordered by construction. A graph is built for one forward
/// pass and discarded; backward never mutates node outputs.
class Graph {
 public:
  NodeId leaf(Tensor value);

  /// Appends an op node, validating shapes and computing its value.
  /// Rejected ops name the offending shapes in the thrown Error.
  NodeId apply(Node node);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].out; }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }

  /// Accumulates gradients for every ancestor of a scalar-valued root.
  GradientMap backward(NodeId root) const;

  /// Same, but only propagates along paths that reach one of the watched
  /// nodes; gradients elsewhere are skipped.
  GradientMap backward(NodeId root, std::span<const NodeId> watch) const;

 private:
  std::vector<Node> nodes_;
};

}  // namespace pointcat
