#pragma once

#include <cstdint>

#include "pointcat/networks.hpp"
#include "pointcat/rng.hpp"

namespace pointcat {

enum class AttackKind { kFgm, kIfgm, kMifgm, kPgd, kCw };

const char* attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct CwConfig {
  int binary_steps = 10;
  int iterations = 500;  // total across all binary steps
  double lr = 0.01;
  double initial_c = 10.0;
  double kappa = 0.0;
};

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  bool targeted = false;
  double epsilon = 0.08;  // l2 radius over the whole K x 3 perturbation
  int iterations = 50;
  double step_size = 0.0;  // <= 0 derives epsilon * sqrt(K*C) / iterations
  double momentum_mu = 1.0;
  bool pgd_random_start = true;  // false reduces PGD to IFGM exactly
  CwConfig cw;

  void validate() const;
};

struct AttackResult {
  Tensor cloud;
  bool success = false;
  double delta_norm = 0.0;
  int skipped_steps = 0;  // steps dropped because the gradient vanished
};

/// Gradient access to a classifier under attack. Implementations build the
/// path from a (K,3) cloud node to a rank-1 logits node; the model itself is
/// frozen in eval mode.
class Victim {
 public:
  virtual ~Victim() = default;
  virtual NodeId logits(Graph& g, NodeId cloud) const = 0;
  virtual Index num_classes() const = 0;
};

/// Encoder + final layer of a recognition model.
class ModelVictim : public Victim {
 public:
  ModelVictim(ParamSet& encoder, ParamSet& classifier)
      : encoder_(&encoder), classifier_(&classifier) {}
  NodeId logits(Graph& g, NodeId cloud) const override;
  Index num_classes() const override;

 private:
  ParamSet* encoder_;
  ParamSet* classifier_;
};

int predict(const Victim& victim, const Tensor& cloud);

/// Projects delta into the l2 ball of radius epsilon, Frobenius norm over
/// all entries.
Tensor l2_project(const Tensor& delta, double epsilon);

/// epsilon * sqrt(K * C) / iterations.
double attack_step_size(double epsilon, Index k, Index c, int iterations);

/// FGM / IFGM / MIFGM / PGD. Untargeted runs ascend the cross-entropy of the
/// true label; targeted runs descend the cross-entropy of the target label.
/// The output always stays inside the epsilon ball around the input.
AttackResult gradient_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                             const AttackConfig& cfg, Rng& rng);

/// Carlini-Wagner: minimizes ||delta||^2 + c * f(x + delta) with Adam,
/// binary-searching c. Returns the successful adversary of smallest norm, or
/// the final iterate flagged unsuccessful.
AttackResult cw_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                       const AttackConfig& cfg);

/// Runs the configured attack.
AttackResult run_attack(const Victim& victim, const Tensor& cloud, int label_or_target,
                        const AttackConfig& cfg, Rng& rng);

}  // namespace pointcat
