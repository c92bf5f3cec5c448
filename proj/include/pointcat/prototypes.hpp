#pragma once

#include <cstdint>

#include "pointcat/networks.hpp"

namespace pointcat {

/// Per-category optimizable pseudo-inputs with cached encoder features and
/// projections. psi persists across batches (warm start); the caches always
/// reflect the model that last refreshed them.
struct PrototypeBank {
  Tensor psi;          // (M, K, 3)
  Tensor features;     // (M, feature_dim)
  Tensor projections;  // (M, projection_dim), rows unit-norm
  double eta1 = 0.005;
  int t1 = 10;

  Index num_categories() const { return psi.rank() == 3 ? psi.dim(0) : 0; }
  Index points() const { return psi.rank() == 3 ? psi.dim(1) : 0; }
};

struct PrototypeUpdateStats {
  Tensor margins_before;  // (M) logit margins at entry
  Tensor margins_after;   // (M) logit margins after the ascent
  int resets = 0;         // categories re-seeded after a non-finite ascent
};

/// Gaussian pseudo-input scale at initialization and after a reset.
inline constexpr double kPrototypeInitStd = 0.25;

/// psi ~ N(0, kPrototypeInitStd^2) per coordinate; caches computed from the
/// current encoder and projector.
PrototypeBank init_bank(Index categories, Index points, std::uint64_t seed, ParamSet& encoder,
                        ParamSet& projector);

/// Recomputes features = encode(psi) and projections = project(features) in
/// eval mode.
void refresh_caches(PrototypeBank& bank, ParamSet& encoder, ParamSet& projector);

/// T1 plain gradient-ascent steps on each category's logit margin, run
/// against the frozen model, then a cache refresh. A category whose ascent
/// turns non-finite is re-seeded from reset_rng and counted in the stats.
PrototypeUpdateStats update_prototypes(PrototypeBank& bank, ParamSet& encoder,
                                       ParamSet& projector, ParamSet& classifier, int t1,
                                       double eta1, Rng& reset_rng);

/// Logit margins of the current psi rows under the frozen model.
Tensor prototype_margins(const PrototypeBank& bank, ParamSet& encoder, ParamSet& classifier);

}  // namespace pointcat
