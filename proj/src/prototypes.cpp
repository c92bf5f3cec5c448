#include "pointcat/prototypes.hpp"

#include "pointcat/ops.hpp"

namespace pointcat {

namespace {

/// Sum of per-category logit margins; rows of psi are independent inputs, so
/// the summed backward pass yields each category's own ascent direction.
NodeId margin_total(Graph& g, NodeId logits, Index categories) {
  NodeId total = -1;
  for (Index y = 0; y < categories; ++y) {
    NodeId row = ops::reshape(g, ops::gather_rows(g, logits, {y}), {g.value(logits).dim(1)});
    NodeId m = ops::logit_margin(g, row, static_cast<int>(y));
    total = total < 0 ? m : ops::add(g, total, m);
  }
  return total;
}

void reseed_category(Tensor& psi, Index category, Rng& rng) {
  const Index k = psi.dim(1);
  auto block = psi.matrix(psi.dim(0), k * 3);
  for (Index j = 0; j < k * 3; ++j) block(category, j) = rng.normal(0.0, kPrototypeInitStd);
}

}  // namespace

PrototypeBank init_bank(Index categories, Index points, std::uint64_t seed, ParamSet& encoder,
                        ParamSet& projector) {
  if (categories < 2) throw Error("prototype bank: needs at least 2 categories");
  PrototypeBank bank;
  bank.psi = Tensor::zeros({categories, points, 3});
  Rng rng(seed);
  for (Index i = 0; i < bank.psi.size(); ++i) bank.psi[i] = rng.normal(0.0, kPrototypeInitStd);
  refresh_caches(bank, encoder, projector);
  return bank;
}

void refresh_caches(PrototypeBank& bank, ParamSet& encoder, ParamSet& projector) {
  bank.features = encode_values(encoder, bank.psi);
  bank.projections = project_values(projector, bank.features);
}

Tensor prototype_margins(const PrototypeBank& bank, ParamSet& encoder, ParamSet& classifier) {
  Graph g;
  NodeId psi = g.leaf(bank.psi);
  NodeId feats = encode(g, encoder, psi, Mode::kEval).out;
  NodeId logits = classify(g, classifier, feats).out;
  const Index m = bank.num_categories();
  Tensor out = Tensor::zeros({m});
  for (Index y = 0; y < m; ++y) {
    NodeId row = ops::reshape(g, ops::gather_rows(g, logits, {y}), {g.value(logits).dim(1)});
    out[y] = g.value(ops::logit_margin(g, row, static_cast<int>(y))).value();
  }
  return out;
}

PrototypeUpdateStats update_prototypes(PrototypeBank& bank, ParamSet& encoder,
                                       ParamSet& projector, ParamSet& classifier, int t1,
                                       double eta1, Rng& reset_rng) {
  const Index m = bank.num_categories();
  PrototypeUpdateStats stats;
  stats.margins_before = prototype_margins(bank, encoder, classifier);

  for (int step = 0; step < t1; ++step) {
    Graph g;
    NodeId psi = g.leaf(bank.psi);
    NodeId feats = encode(g, encoder, psi, Mode::kEval).out;
    NodeId logits = classify(g, classifier, feats).out;
    NodeId total = margin_total(g, logits, m);
    std::vector<NodeId> watch = {psi};
    auto grads = g.backward(total, watch);
    if (grads.has(psi)) {
      bank.psi.array() += eta1 * grads.at(psi).array();
    }
    auto block = bank.psi.matrix(m, bank.points() * 3);
    for (Index y = 0; y < m; ++y) {
      if (!block.row(y).allFinite()) {
        reseed_category(bank.psi, y, reset_rng);
        ++stats.resets;
      }
    }
  }

  refresh_caches(bank, encoder, projector);
  stats.margins_after = prototype_margins(bank, encoder, classifier);
  return stats;
}

}  // namespace pointcat
