#include "pointcat/optim.hpp"

#include <cmath>

namespace pointcat {

double cosine_anneal(double lr0, double epoch, double total_epochs) {
  if (total_epochs <= 0.0) throw Error("cosine_anneal: total_epochs must be positive");
  if (epoch < 0.0 || epoch > total_epochs) {
    throw Error("cosine_anneal: epoch " + std::to_string(epoch) + " outside [0, " +
                std::to_string(total_epochs) + "]");
  }
  return lr0 * (1.0 + std::cos(M_PI * epoch / total_epochs)) / 2.0;
}

bool clip_global_norm(NamedGrads& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.array().square().sum();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return false;
  const double scale = max_norm / norm;
  for (auto& [name, g] : grads) g.array() *= scale;
  return true;
}

void AdamOptimizer::step(ParamSet& params, const NamedGrads& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    if (!params.has(name)) throw Error("adam: gradient for unknown parameter \"" + name + "\"");
    if (!params.trainable(name)) continue;
    if (!grad.all_finite()) {
      throw Error("adam: non-finite gradient for parameter \"" + name + "\"");
    }
    Tensor& p = params.at(name);
    if (!p.same_shape(grad)) {
      throw Error("adam: gradient shape " + grad.shape_str() + " does not match parameter \"" +
                  name + "\" " + p.shape_str());
    }
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) {
      it->second.m = Tensor::zeros(p.shape());
      it->second.v = Tensor::zeros(p.shape());
    }
    auto m = it->second.m.array();
    auto v = it->second.v.array();
    m = beta1_ * m + (1.0 - beta1_) * grad.array();
    v = beta2_ * v + (1.0 - beta2_) * grad.array().square();
    p.array() -= lr * (m / bc1) / ((v / bc2).sqrt() + eps_);
  }
}

}  // namespace pointcat
