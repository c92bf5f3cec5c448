#include "pointcat/params.hpp"

namespace pointcat {

Tensor& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (has(name)) throw Error("param set: duplicate parameter \"" + name + "\"");
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.back().value;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("param set: unknown parameter \"" + name + "\"");
  return entries_[it->second].value;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("param set: unknown parameter \"" + name + "\"");
  return entries_[it->second].value;
}

bool ParamSet::trainable(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("param set: unknown parameter \"" + name + "\"");
  return entries_[it->second].trainable;
}

NodeId BoundParams::at(const std::string& name) const {
  for (const auto& [n, id] : leaves) {
    if (n == name) return id;
  }
  throw Error("bound params: unknown parameter \"" + name + "\"");
}

BoundParams bind_params(Graph& g, const ParamSet& params) {
  BoundParams bound;
  bound.leaves.reserve(params.size());
  for (const auto& entry : params.entries()) {
    bound.leaves.emplace_back(entry.name, g.leaf(entry.value));
  }
  return bound;
}

void collect_grads(const BoundParams& bound, const GradientMap& grads, NamedGrads& out) {
  for (const auto& [name, id] : bound.leaves) {
    if (!grads.has(id)) continue;
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, grads.at(id));
    } else {
      it->second.array() += grads.at(id).array();
    }
  }
}

void append_watch(const BoundParams& bound, std::vector<NodeId>& watch) {
  for (const auto& [name, id] : bound.leaves) watch.push_back(id);
}

}  // namespace pointcat
