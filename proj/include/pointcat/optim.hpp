#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "pointcat/params.hpp"
#include "pointcat/tensor.hpp"

namespace pointcat {

/// Cosine annealing: lr0 * (1 + cos(pi * epoch / total_epochs)) / 2.
double cosine_anneal(double lr0, double epoch, double total_epochs);

/// Rescales all gradients so their global l2 norm is at most max_norm.
/// Returns true when clipping fired.
bool clip_global_norm(NamedGrads& grads, double max_norm);

/// Adam with per-parameter moment buffers keyed by name. Moments appear
/// lazily on the first step that touches a parameter.
class AdamOptimizer {
 public:
  struct Moments {
    Tensor m, v;
  };

  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update over the trainable entries named in grads. A NaN gradient
  /// aborts with the offending parameter named.
  void step(ParamSet& params, const NamedGrads& grads, double lr);

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace pointcat
