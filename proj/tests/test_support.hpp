#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pointcat/graph.hpp"
#include "pointcat/rng.hpp"
#include "pointcat/tensor.hpp"

namespace pctest {

using pointcat::Graph;
using pointcat::Index;
using pointcat::NodeId;
using pointcat::Rng;
using pointcat::Tensor;

inline Tensor random_tensor(std::vector<Index> shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Builds a scalar-rooted graph from leaves of the given tensors.
using GraphBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

/// Central finite differences against the analytic backward pass.
///
/// Returns the worst relative error over every element of every input, with
/// the error scaled by max(|analytic|, |numeric|, 1) so near-zero gradients
/// compare absolutely.
inline double max_grad_error(const std::vector<Tensor>& inputs, const GraphBuilder& build,
                             double step = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& ins) {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(ins.size());
    for (const Tensor& t : ins) ids.push_back(g.leaf(t));
    return std::pair{g.value(build(g, ids)).value(), std::move(ids)};
  };

  Graph g;
  std::vector<NodeId> ids;
  for (const Tensor& t : inputs) ids.push_back(g.leaf(t));
  NodeId root = build(g, ids);
  auto grads = g.backward(root);

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Index e = 0; e < inputs[i].size(); ++e) {
      const double orig = work[i][e];
      work[i][e] = orig + step;
      const double fp = eval(work).first;
      work[i][e] = orig - step;
      const double fm = eval(work).first;
      work[i][e] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = grads.has(ids[i]) ? grads.at(ids[i])[e] : 0.0;
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1.0});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

/// Unit vector of the given length (for hand-placed projections).
inline Tensor unit_vector(Index dim, Index axis) {
  Tensor t = Tensor::zeros({dim});
  t[axis] = 1.0;
  return t;
}

}  // namespace pctest
