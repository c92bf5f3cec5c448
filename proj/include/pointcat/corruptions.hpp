#pragma once

#include <cstdint>

#include "pointcat/tensor.hpp"

namespace pointcat {

/// Adds i.i.d. Normal(0, std_frac^2) noise per coordinate. std_frac reads
/// directly against the unit-cube scale of normalized clouds.
Tensor gaussian_corrupt(const Tensor& cloud, double std_frac, std::uint64_t seed);

/// Keeps floor(K * (1 - ratio)) points chosen uniformly without replacement,
/// preserving their original order. Rejects results below 8 points.
Tensor drop_points(const Tensor& cloud, double ratio, std::uint64_t seed);

/// Pads a cloud back to k points by cycling over the existing ones, for
/// models that require a fixed K.
Tensor repeat_pad(const Tensor& cloud, Index k);

}  // namespace pointcat
