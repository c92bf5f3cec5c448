#include "pointcat/losses.hpp"

#include "pointcat/ops.hpp"

namespace pointcat::losses {

namespace {

void check_batch(const Graph& g, const ContrastBatch& batch) {
  const Tensor& z = g.value(batch.projections);
  if (z.rank() != 2) throw Error("contrast batch: projections must be (2N,P), got " + z.shape_str());
  if (z.dim(0) != 2 * static_cast<Index>(batch.labels.size())) {
    throw Error("contrast batch: " + std::to_string(z.dim(0)) + " rows do not match " +
                std::to_string(batch.labels.size()) + " labels");
  }
  if (batch.labels.empty()) throw Error("contrast batch: empty");
  if (batch.tau_sup <= 0 || batch.tau_cen <= 0 || batch.tau_adv <= 0) {
    throw Error("contrast batch: temperatures must be positive");
  }
}

void check_labels(const std::vector<int>& labels, Index num_classes, const char* who) {
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw Error(std::string(who) + ": label " + std::to_string(y) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
  }
}

NodeId mean_neg_exp_neg(Graph& g, NodeId sims, double tau) {
  // mean of -exp(-sim / tau)
  NodeId e = ops::exponential(g, ops::scalar_scale(g, sims, -1.0 / tau));
  return ops::mean(g, ops::scalar_scale(g, e, -1.0));
}

}  // namespace

std::vector<Index> positive_set(Index i, const std::vector<int>& labels) {
  const Index rows = 2 * static_cast<Index>(labels.size());
  if (i < 0 || i >= rows) throw Error("positive_set: row index out of range");
  std::vector<Index> out;
  const int y = labels[static_cast<std::size_t>(i / 2)];
  for (Index j = 0; j < rows; ++j) {
    if (j != i && labels[static_cast<std::size_t>(j / 2)] == y) out.push_back(j);
  }
  return out;
}

std::vector<Index> clean_rows(Index pairs) {
  std::vector<Index> out(static_cast<std::size_t>(pairs));
  for (Index k = 0; k < pairs; ++k) out[static_cast<std::size_t>(k)] = 2 * k;
  return out;
}

std::vector<Index> corrupted_rows(Index pairs) {
  std::vector<Index> out(static_cast<std::size_t>(pairs));
  for (Index k = 0; k < pairs; ++k) out[static_cast<std::size_t>(k)] = 2 * k + 1;
  return out;
}

NodeId sup_contrastive(Graph& g, const ContrastBatch& batch) {
  check_batch(g, batch);
  const Index rows = g.value(batch.projections).dim(0);

  NodeId sims = ops::scalar_scale(
      g, ops::matmul(g, batch.projections, ops::transpose(g, batch.projections)),
      1.0 / batch.tau_sup);

  Tensor off_diag = Tensor::full({rows, rows}, 1.0);
  Tensor pos_weights = Tensor::zeros({rows, rows});
  auto pw = pos_weights.matrix();
  for (Index i = 0; i < rows; ++i) {
    off_diag.matrix()(i, i) = 0.0;
    const auto pos = positive_set(i, batch.labels);
    for (Index j : pos) pw(i, j) = 1.0 / static_cast<double>(pos.size());
  }

  NodeId lse = ops::row_logsumexp_masked(g, sims, std::move(off_diag));
  NodeId pos_mean = ops::row_dot(g, sims, g.leaf(std::move(pos_weights)));
  return ops::mean(g, ops::subtract(g, lse, pos_mean));
}

namespace {

/// Shared body of the two centralizing terms: rows (N,P) against prototypes.
NodeId centralizing_half(Graph& g, NodeId z_half, NodeId proto, const std::vector<int>& labels,
                         double tau) {
  const Index n = static_cast<Index>(labels.size());
  const Index m = g.value(proto).dim(0);

  NodeId sims =
      ops::scalar_scale(g, ops::matmul(g, z_half, ops::transpose(g, proto)), 1.0 / tau);

  Tensor not_own = Tensor::full({n, m}, 1.0);
  Tensor own = Tensor::zeros({n, m});
  for (Index k = 0; k < n; ++k) {
    not_own.matrix()(k, labels[static_cast<std::size_t>(k)]) = 0.0;
    own.matrix()(k, labels[static_cast<std::size_t>(k)]) = 1.0;
  }

  NodeId lse = ops::row_logsumexp_masked(g, sims, std::move(not_own));
  NodeId picked = ops::row_dot(g, sims, g.leaf(std::move(own)));
  return ops::subtract(g, lse, picked);
}

}  // namespace

NodeId centralizing(Graph& g, const ContrastBatch& batch, NodeId proto_projections) {
  check_batch(g, batch);
  const Tensor& proto = g.value(proto_projections);
  if (proto.rank() != 2 || proto.dim(0) < 2) {
    throw Error("centralizing: needs at least 2 prototype rows, got " + proto.shape_str());
  }
  check_labels(batch.labels, proto.dim(0), "centralizing");
  const Index n = static_cast<Index>(batch.labels.size());

  NodeId z_clean = ops::gather_rows(g, batch.projections, clean_rows(n));
  NodeId z_adv = ops::gather_rows(g, batch.projections, corrupted_rows(n));
  NodeId ori = centralizing_half(g, z_clean, proto_projections, batch.labels, batch.tau_cen);
  NodeId adv = centralizing_half(g, z_adv, proto_projections, batch.labels, batch.tau_cen);
  return ops::mean(g, ops::add(g, ori, adv));
}

NodeId gap_from_halves(Graph& g, NodeId z_clean, NodeId z_adv, double tau_adv) {
  return mean_neg_exp_neg(g, ops::row_dot(g, z_clean, z_adv), tau_adv);
}

NodeId escape_from_halves(Graph& g, NodeId z_adv, NodeId proto_projections,
                          const std::vector<int>& labels, double tau_adv) {
  check_labels(labels, g.value(proto_projections).dim(0), "escape_loss");
  std::vector<Index> rows(labels.begin(), labels.end());
  NodeId own_proto = ops::gather_rows(g, proto_projections, std::move(rows));
  return mean_neg_exp_neg(g, ops::row_dot(g, z_adv, own_proto), tau_adv);
}

NodeId gap_loss(Graph& g, const ContrastBatch& batch) {
  check_batch(g, batch);
  const Index n = static_cast<Index>(batch.labels.size());
  NodeId z_clean = ops::gather_rows(g, batch.projections, clean_rows(n));
  NodeId z_adv = ops::gather_rows(g, batch.projections, corrupted_rows(n));
  return gap_from_halves(g, z_clean, z_adv, batch.tau_adv);
}

NodeId escape_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections) {
  check_batch(g, batch);
  const Index n = static_cast<Index>(batch.labels.size());
  NodeId z_adv = ops::gather_rows(g, batch.projections, corrupted_rows(n));
  return escape_from_halves(g, z_adv, proto_projections, batch.labels, batch.tau_adv);
}

NodeId adv_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections, double beta) {
  NodeId gap = gap_loss(g, batch);
  NodeId esc = escape_loss(g, batch, proto_projections);
  return ops::add(g, gap, ops::scalar_scale(g, esc, beta));
}

NodeId robust_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections, double alpha) {
  NodeId sup = sup_contrastive(g, batch);
  NodeId cen = centralizing(g, batch, proto_projections);
  return ops::add(g, sup, ops::scalar_scale(g, cen, alpha));
}

NodeId cross_entropy(Graph& g, NodeId logits, const std::vector<int>& labels) {
  const Tensor& lg = g.value(logits);
  if (lg.rank() != 2) throw Error("cross_entropy: logits must be (N,M), got " + lg.shape_str());
  if (lg.dim(0) != static_cast<Index>(labels.size())) {
    throw Error("cross_entropy: " + std::to_string(lg.dim(0)) + " logit rows vs " +
                std::to_string(labels.size()) + " labels");
  }
  check_labels(labels, lg.dim(1), "cross_entropy");

  const Index n = lg.dim(0), m = lg.dim(1);
  Tensor ones = Tensor::full({n, m}, 1.0);
  Tensor onehot = Tensor::zeros({n, m});
  for (Index i = 0; i < n; ++i) onehot.matrix()(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  NodeId lse = ops::row_logsumexp_masked(g, logits, std::move(ones));
  NodeId picked = ops::row_dot(g, logits, g.leaf(std::move(onehot)));
  return ops::mean(g, ops::subtract(g, lse, picked));
}

}  // namespace pointcat::losses
