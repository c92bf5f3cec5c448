#pragma once

#include <vector>

#include "pointcat/graph.hpp"

namespace pointcat::losses {

/// A batch of 2N projections on the unit hypersphere, interleaved as
/// (clean_0, corrupted_0, clean_1, ...): pair k occupies rows 2k and 2k+1,
/// and labels[k] is the category shared by both rows. This 0-based layout is
/// the only place the pairing convention lives; positive_set and every loss
/// below assume it.
struct ContrastBatch {
  NodeId projections = -1;  // (2N, P)
  std::vector<int> labels;  // N entries
  double tau_sup = 0.1;
  double tau_cen = 0.25;
  double tau_adv = 0.1;
};

/// Indices of all same-category rows except i itself.
std::vector<Index> positive_set(Index i, const std::vector<int>& labels);

/// Supervised contrastive loss averaged over all 2N rows. Each row's term is
/// the mean over its positive set of -log(exp(sim/tau) / sum_{s != i}
/// exp(sim/tau)).
NodeId sup_contrastive(Graph& g, const ContrastBatch& batch);

/// Pair of centralizing losses against the prototype projections (M, P),
/// averaged over pairs. The denominator runs over the other categories only
/// (t != y_k), so it needs M >= 2.
NodeId centralizing(Graph& g, const ContrastBatch& batch, NodeId proto_projections);

/// Generator objectives: mean_k -exp(-sim(z_clean, z_corrupted) / tau_adv)
/// and mean_k -exp(-sim(z_corrupted, omega_{y_k}) / tau_adv).
NodeId gap_loss(Graph& g, const ContrastBatch& batch);
NodeId escape_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections);

/// Same losses on pre-split halves (N,P) each, as the generator inner loop
/// holds the clean side constant and never materializes the 2N layout.
NodeId gap_from_halves(Graph& g, NodeId z_clean, NodeId z_adv, double tau_adv);
NodeId escape_from_halves(Graph& g, NodeId z_adv, NodeId proto_projections,
                          const std::vector<int>& labels, double tau_adv);

/// gap + beta * escape.
NodeId adv_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections, double beta);

/// sup_contrastive + alpha * centralizing.
NodeId robust_loss(Graph& g, const ContrastBatch& batch, NodeId proto_projections, double alpha);

/// Mean over the batch of -log softmax(logits)[label].
NodeId cross_entropy(Graph& g, NodeId logits, const std::vector<int>& labels);

/// Row indices of the clean (even) and corrupted (odd) halves.
std::vector<Index> clean_rows(Index pairs);
std::vector<Index> corrupted_rows(Index pairs);

}  // namespace pointcat::losses
