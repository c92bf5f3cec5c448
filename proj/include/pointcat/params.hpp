#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pointcat/graph.hpp"
#include "pointcat/tensor.hpp"

namespace pointcat {

/// One named parameter tensor. Non-trainable entries (batch-norm running
/// statistics) are serialized with the rest but skipped by the optimizer.
struct ParamEntry {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Ordered collection of named parameter tensors.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor value, bool trainable = true);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool trainable(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Leaf node ids created for one forward pass of a ParamSet.
struct BoundParams {
  std::vector<std::pair<std::string, NodeId>> leaves;
  NodeId at(const std::string& name) const;
};

/// Creates one graph leaf per parameter entry.
BoundParams bind_params(Graph& g, const ParamSet& params);

using NamedGrads = std::map<std::string, Tensor>;

/// Reads the gradients of bound parameter leaves out of a gradient map,
/// summing over duplicate bindings and skipping leaves without a gradient.
void collect_grads(const BoundParams& bound, const GradientMap& grads, NamedGrads& out);

/// Node ids of all bound leaves (for backward watch lists).
void append_watch(const BoundParams& bound, std::vector<NodeId>& watch);

}  // namespace pointcat
