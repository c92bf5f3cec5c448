#pragma once

#include <vector>

#include "pointcat/graph.hpp"

namespace pointcat::ops {

/// a (R,K) x b (K,C) -> (R,C)
NodeId matmul(Graph& g, NodeId a, NodeId b);

/// a (R,C) -> (C,R)
NodeId transpose(Graph& g, NodeId a);

/// Elementwise add; b may also be rank-1 (C) broadcast over the folded rows
/// of a (bias add).
NodeId add(Graph& g, NodeId a, NodeId b);

NodeId multiply(Graph& g, NodeId a, NodeId b);
NodeId subtract(Graph& g, NodeId a, NodeId b);
NodeId scalar_scale(Graph& g, NodeId a, double factor);
NodeId relu(Graph& g, NodeId a);
NodeId exponential(Graph& g, NodeId a);
NodeId natural_log(Graph& g, NodeId a);

/// Softmax over the last dimension, rows independent.
NodeId softmax_last_dim(Graph& g, NodeId a);

/// (N,K,D) -> (N,D), max over the point dimension. Ties go to the lowest
/// point index so gradients are deterministic.
NodeId max_pool_points(Graph& g, NodeId a);

/// Batch normalization over folded rows of x (R,C), per-feature.
/// Training mode normalizes with batch statistics (biased variance) and
/// caches them; eval mode normalizes with the running statistics passed as
/// leaf inputs. gamma/beta are the affine terms, shape (C).
NodeId batch_norm_train(Graph& g, NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
NodeId batch_norm_eval(Graph& g, NodeId x, NodeId gamma, NodeId beta, NodeId run_mean,
                       NodeId run_var, double eps = 1e-5);

/// Batch statistics cached by a training-mode batch-norm node.
Tensor bn_batch_mean(const Graph& g, NodeId bn);
Tensor bn_batch_var(const Graph& g, NodeId bn);

/// Concatenate along the last dimension; leading dimensions must match.
NodeId concat_last_dim(Graph& g, std::vector<NodeId> parts);

NodeId reshape(Graph& g, NodeId a, std::vector<Index> new_shape);

/// Reduce all elements to a scalar.
NodeId sum(Graph& g, NodeId a);
NodeId mean(Graph& g, NodeId a);

/// Frobenius norm of the whole tensor -> scalar.
NodeId l2_norm(Graph& g, NodeId a);

/// Cosine similarity of two tensors viewed as flat vectors -> scalar.
NodeId cosine_similarity(Graph& g, NodeId a, NodeId b);

/// Select rows (folded view) by index; indices may repeat.
NodeId gather_rows(Graph& g, NodeId a, std::vector<Index> rows);

/// Per-row x / (||x|| + eps).
NodeId row_l2_normalize(Graph& g, NodeId a, double eps = 1e-12);

/// Per-row dot product of two equally shaped (R,C) tensors -> (R).
NodeId row_dot(Graph& g, NodeId a, NodeId b);

/// Per-row log sum_j mask_ij * exp(a_ij), computed with a max shift.
/// The mask is a constant 0/1 tensor of the same shape; every row must keep
/// at least one entry.
NodeId row_logsumexp_masked(Graph& g, NodeId a, Tensor mask);

/// Per-row projection into the l2 ball of the given radius: rows with norm
/// above the radius are rescaled onto the sphere, others pass through.
NodeId row_l2_clip(Graph& g, NodeId a, double radius);

/// logits (M) -> logits[y] - max_{t != y} logits[t], scalar.
NodeId logit_margin(Graph& g, NodeId logits, int y);

}  // namespace pointcat::ops
