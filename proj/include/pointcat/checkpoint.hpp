#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pointcat/networks.hpp"
#include "pointcat/prototypes.hpp"

namespace pointcat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Ordered named tensors behind the "PCAT" container. Network parameters,
/// the prototype bank, optimizer moments, RNG streams and run metadata all
/// live here under their own name prefixes; round trips are bit-exact.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, Tensor>> entries;

  void add(std::string name, Tensor value);
  bool has(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// A u64 split into two exactly representable doubles (lo32, hi32), so
/// RNG states survive the f64-only payload format bit-exactly.
Tensor encode_u64(std::uint64_t v);
std::uint64_t decode_u64(const Tensor& t);

/// The four networks plus the prototype bank.
struct ModelBundle {
  ModelDims dims;
  ParamSet encoder;
  ParamSet projector;
  ParamSet classifier;
  ParamSet generator;
  PrototypeBank bank;
};

/// Freshly initialized networks and bank.
ModelBundle make_bundle(const ModelDims& dims, std::uint64_t seed);

/// Serializes network parameters and "proto/psi" into checkpoint entries.
void bundle_into_checkpoint(const ModelBundle& bundle, Checkpoint& ckpt);

/// Rebuilds a bundle from checkpoint entries, inferring the layer widths
/// from parameter names and shapes; prototype caches are recomputed.
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

}  // namespace pointcat
