#pragma once

#include <cstdint>

namespace pointcat {

/// SplitMix64 stream with a single-word state.
///
/// Deterministic across platforms and trivially serializable, which is what
/// checkpoint resume needs. Normal draws use Box-Muller without a cached
/// spare so the state stays one word.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n), n > 0.
  std::uint64_t bounded(std::uint64_t n);

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_ = 0;
};

/// Derives an independent stream seed from a root seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream_tag);

}  // namespace pointcat
