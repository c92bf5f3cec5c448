#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointcat/params.hpp"
#include "pointcat/rng.hpp"

namespace pointcat {

enum class Mode { kTrain, kEval };

/// Layer widths for the four networks. Defaults follow the PointNet-style
/// lineage; every width can be shrunk for desk-scale experiments.
struct ModelDims {
  std::vector<Index> encoder_widths{64, 128, 256, 1024};
  Index projector_hidden = 1024;
  Index projection_dim = 128;
  std::vector<Index> cmlp_widths{64, 128, 256, 512};
  Index decoder_hidden = 1024;
  Index refine_hidden = 16;
  Index num_classes = 2;
  Index points = 1024;  // K expected by the generator decoder

  Index feature_dim() const { return encoder_widths.back(); }
  /// CMLP latent: concatenation of the pooled levels (all but the first).
  Index cmlp_latent() const;
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

// Parameter construction. Weights are Kaiming-uniform (fan-in), biases zero,
// batch-norm gamma 1 / beta 0 with running stats 0 / 1. The generator's last
// layer starts at 1/10 scale so fresh perturbations are small.
ParamSet make_encoder(const ModelDims& dims, Rng& rng);
ParamSet make_projector(const ModelDims& dims, Rng& rng);
ParamSet make_classifier(const ModelDims& dims, Rng& rng);
ParamSet make_generator(const ModelDims& dims, Rng& rng);

/// Output node plus the parameter leaves bound for this forward pass.
struct ForwardResult {
  NodeId out;
  BoundParams bound;
};

/// Shared per-point LBR stack then max-pool over points.
/// batch node: (N,K,3) -> features (N, feature_dim). In training mode the
/// batch-norm running statistics inside `params` are updated in place.
ForwardResult encode(Graph& g, ParamSet& params, NodeId batch, Mode mode);

/// Projection head: LBR then linear, rows l2-normalized.
/// features (N,D) -> projections (N, projection_dim).
ForwardResult project(Graph& g, ParamSet& params, NodeId features, Mode mode);

/// Final linear layer: features (N,D) -> raw logits (N,M).
ForwardResult classify(Graph& g, ParamSet& params, NodeId features);

/// CMLP encoder with multi-depth pooling, fully-connected decoder and
/// per-point refinement. batch (N,K,3) -> raw perturbations (N,K,3),
/// unconstrained (callers project into the l2 ball).
ForwardResult generate_noise(Graph& g, ParamSet& params, NodeId batch, Mode mode);

/// Batch-norm running statistics momentum used by all networks.
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEps = 1e-5;

/// Convenience: eval-mode features/logits/projections as plain tensors.
Tensor encode_values(ParamSet& params, const Tensor& batch);
Tensor project_values(ParamSet& params, const Tensor& features);
Tensor classify_values(ParamSet& params, const Tensor& features);
Tensor generate_noise_values(ParamSet& params, const Tensor& batch);

/// Stacks equally sized clouds (K,3) into a batch tensor (N,K,3).
Tensor stack_clouds(const std::vector<Tensor>& clouds);

std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace pointcat
