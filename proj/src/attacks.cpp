#include "pointcat/attacks.hpp"

#include <cmath>

#include "pointcat/losses.hpp"
#include "pointcat/ops.hpp"
#include "pointcat/optim.hpp"

namespace pointcat {

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgm: return "fgm";
    case AttackKind::kIfgm: return "ifgm";
    case AttackKind::kMifgm: return "mifgm";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kCw: return "cw";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgm") return AttackKind::kFgm;
  if (name == "ifgm") return AttackKind::kIfgm;
  if (name == "mifgm") return AttackKind::kMifgm;
  if (name == "pgd") return AttackKind::kPgd;
  if (name == "cw") return AttackKind::kCw;
  throw Error("unknown attack kind \"" + name + "\"");
}

void AttackConfig::validate() const {
  if (epsilon <= 0.0 && kind != AttackKind::kCw) throw Error("attack: epsilon must be positive");
  if (iterations < 1) throw Error("attack: iterations must be >= 1");
  if (kind == AttackKind::kCw) {
    if (cw.binary_steps < 1 || cw.iterations < 1) throw Error("attack: cw steps must be >= 1");
    if (cw.lr <= 0.0) throw Error("attack: cw lr must be positive");
  }
}

NodeId ModelVictim::logits(Graph& g, NodeId cloud) const {
  const Tensor& c = g.value(cloud);
  if (c.rank() != 2 || c.dim(1) != 3) {
    throw Error("victim: expects a (K,3) cloud, got " + c.shape_str());
  }
  NodeId batch = ops::reshape(g, cloud, {1, c.dim(0), 3});
  NodeId feats = encode(g, *encoder_, batch, Mode::kEval).out;
  NodeId logits = classify(g, *classifier_, feats).out;
  return ops::reshape(g, logits, {g.value(logits).dim(1)});
}

Index ModelVictim::num_classes() const {
  return classifier_->at("cls/l0/W").dim(1);
}

int predict(const Victim& victim, const Tensor& cloud) {
  Graph g;
  NodeId l = victim.logits(g, g.leaf(cloud));
  const Tensor& v = g.value(l);
  Index best = 0;
  for (Index t = 1; t < v.size(); ++t) {
    if (v[t] > v[best]) best = t;
  }
  return static_cast<int>(best);
}

Tensor l2_project(const Tensor& delta, double epsilon) {
  if (epsilon <= 0.0) throw Error("l2_project: epsilon must be positive");
  const double norm = std::sqrt(delta.array().square().sum());
  if (norm <= epsilon) return delta;
  Tensor out = delta;
  out.array() *= epsilon / norm;
  return out;
}

double attack_step_size(double epsilon, Index k, Index c, int iterations) {
  if (epsilon <= 0.0 || k <= 0 || c <= 0 || iterations <= 0) {
    throw Error("attack_step_size: all arguments must be positive");
  }
  return epsilon * std::sqrt(static_cast<double>(k * c)) / static_cast<double>(iterations);
}

namespace {

/// Cross-entropy of the victim's logits at x + delta, with the gradient
/// taken at the delta leaf.
Tensor ce_gradient(const Victim& victim, const Tensor& cloud, const Tensor& delta, int label) {
  Graph g;
  NodeId x = g.leaf(cloud);
  NodeId d = g.leaf(delta);
  NodeId adv = ops::add(g, x, d);
  NodeId logits = victim.logits(g, adv);
  const Index m = g.value(logits).size();
  NodeId loss = losses::cross_entropy(g, ops::reshape(g, logits, {1, m}), {label});
  std::vector<NodeId> watch = {d};
  auto grads = g.backward(loss, watch);
  return grads.has(d) ? grads.at(d) : Tensor::zeros(delta.shape());
}

Tensor uniform_ball_point(std::vector<Index> shape, double epsilon, Rng& rng) {
  Tensor dir = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
  const double norm = std::sqrt(dir.array().square().sum());
  const double radius =
      epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dir.size()));
  if (norm > 0.0) dir.array() *= radius / norm;
  return dir;
}

bool attack_goal_met(const Victim& victim, const Tensor& cloud, int label_or_target,
                     bool targeted) {
  const int pred = predict(victim, cloud);
  return targeted ? pred == label_or_target : pred != label_or_target;
}

}  // namespace

AttackResult gradient_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                             const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.kind == AttackKind::kCw) throw Error("gradient_attack: use cw_attack for cw");
  const Index k = cloud.dim(0);
  const int iters = cfg.kind == AttackKind::kFgm ? 1 : cfg.iterations;
  const double step =
      cfg.step_size > 0.0 ? cfg.step_size : attack_step_size(cfg.epsilon, k, 3, iters);
  const double sign = cfg.targeted ? -1.0 : 1.0;

  AttackResult result;
  Tensor delta = Tensor::zeros(cloud.shape());
  if (cfg.kind == AttackKind::kPgd && cfg.pgd_random_start) {
    delta = uniform_ball_point(cloud.shape(), cfg.epsilon, rng);
  }
  Tensor momentum = Tensor::zeros(cloud.shape());

  for (int it = 0; it < iters; ++it) {
    Tensor grad = ce_gradient(victim, cloud, delta, label_or_target);
    const double gnorm = std::sqrt(grad.array().square().sum());
    if (gnorm == 0.0) {
      ++result.skipped_steps;
      continue;
    }
    Tensor dir = grad;
    if (cfg.kind == AttackKind::kMifgm) {
      const double l1 = grad.array().abs().sum();
      momentum.array() = cfg.momentum_mu * momentum.array() + grad.array() / l1;
      const double mnorm = std::sqrt(momentum.array().square().sum());
      if (mnorm == 0.0) {
        ++result.skipped_steps;
        continue;
      }
      dir = momentum;
      dir.array() /= mnorm;
    } else {
      dir.array() /= gnorm;
    }

    if (cfg.kind == AttackKind::kFgm) {
      delta = dir;
      delta.array() *= sign * cfg.epsilon;
    } else {
      delta.array() += sign * step * dir.array();
      delta = l2_project(delta, cfg.epsilon);
    }
  }

  result.cloud = cloud;
  result.cloud.array() += delta.array();
  result.delta_norm = std::sqrt(delta.array().square().sum());
  result.success = attack_goal_met(victim, result.cloud, label_or_target, cfg.targeted);
  return result;
}

AttackResult cw_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                       const AttackConfig& cfg) {
  cfg.validate();
  const int per_step = std::max(1, cfg.cw.iterations / cfg.cw.binary_steps);

  AttackResult result;
  if (attack_goal_met(victim, cloud, label_or_target, cfg.targeted)) {
    result.cloud = cloud;
    result.success = true;
    result.delta_norm = 0.0;
    return result;
  }

  double lower = 1e-3, upper = 1e6;
  double c = cfg.cw.initial_c;
  bool found = false;
  double best_norm = 0.0;
  Tensor best_delta = Tensor::zeros(cloud.shape());
  Tensor final_delta = Tensor::zeros(cloud.shape());

  for (int bs = 0; bs < cfg.cw.binary_steps; ++bs) {
    ParamSet params;
    params.add("delta", Tensor::zeros(cloud.shape()));
    AdamOptimizer adam;
    bool step_success = false;

    for (int it = 0; it < per_step; ++it) {
      Graph g;
      NodeId x = g.leaf(cloud);
      NodeId d = g.leaf(params.at("delta"));
      NodeId adv = ops::add(g, x, d);
      NodeId logits = victim.logits(g, adv);

      // f = max(margin, -kappa) written as relu(margin + kappa) - kappa;
      // targeted flips the sign of the logit margin.
      NodeId raw = ops::logit_margin(g, logits, label_or_target);
      if (cfg.targeted) raw = ops::scalar_scale(g, raw, -1.0);
      NodeId hinge = ops::relu(g, ops::add(g, raw, g.leaf(Tensor::scalar(cfg.cw.kappa))));
      NodeId norm_sq = ops::sum(g, ops::multiply(g, d, d));
      NodeId loss = ops::add(g, norm_sq, ops::scalar_scale(g, hinge, c));

      // Success bookkeeping at the current iterate, before the update.
      const Tensor& lv = g.value(logits);
      Index pred = 0;
      for (Index t = 1; t < lv.size(); ++t) {
        if (lv[t] > lv[pred]) pred = t;
      }
      const bool ok = cfg.targeted ? static_cast<int>(pred) == label_or_target
                                   : static_cast<int>(pred) != label_or_target;
      if (ok) {
        const double norm = std::sqrt(params.at("delta").array().square().sum());
        if (!found || norm < best_norm) {
          found = true;
          best_norm = norm;
          best_delta = params.at("delta");
        }
        step_success = true;
      }

      std::vector<NodeId> watch = {d};
      auto grads = g.backward(loss, watch);
      NamedGrads named;
      named.emplace("delta", grads.has(d) ? grads.at(d) : Tensor::zeros(cloud.shape()));
      adam.step(params, named, cfg.cw.lr);
    }

    final_delta = params.at("delta");
    if (step_success) {
      upper = std::min(upper, c);
      c = 0.5 * (lower + upper);
    } else {
      lower = std::max(lower, c);
      c = upper >= 1e6 ? std::min(c * 10.0, upper) : 0.5 * (lower + upper);
    }
  }

  result.cloud = cloud;
  if (found) {
    result.cloud.array() += best_delta.array();
    result.delta_norm = best_norm;
    result.success = true;
  } else {
    result.cloud.array() += final_delta.array();
    result.delta_norm = std::sqrt(final_delta.array().square().sum());
    result.success = attack_goal_met(victim, result.cloud, label_or_target, cfg.targeted);
  }
  return result;
}

AttackResult run_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                        const AttackConfig& cfg, Rng& rng) {
  return cfg.kind == AttackKind::kCw ? cw_attack(victim, cloud, label_or_target, cfg)
                                     : gradient_attack(victim, cloud, label_or_target, cfg, rng);
}

}  // namespace pointcat
