#include "pointcat/rng.hpp"

#include <cmath>

namespace pointcat {

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::bounded(std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream_tag) {
  Rng r(root ^ (0xD1B54A32D192ED03ULL * (stream_tag + 1)));
  r.next_u64();
  return r.next_u64();
}

}  // namespace pointcat
