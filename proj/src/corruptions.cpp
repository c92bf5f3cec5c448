#include "pointcat/corruptions.hpp"

#include <algorithm>
#include <cmath>

#include "pointcat/rng.hpp"

namespace pointcat {

namespace {

void check_cloud(const Tensor& cloud, const char* who) {
  if (cloud.rank() != 2 || cloud.dim(1) != 3) {
    throw Error(std::string(who) + ": expects a (K,3) cloud, got " + cloud.shape_str());
  }
}

}  // namespace

Tensor gaussian_corrupt(const Tensor& cloud, double std_frac, std::uint64_t seed) {
  check_cloud(cloud, "gaussian_corrupt");
  if (std_frac < 0.0) throw Error("gaussian_corrupt: std_frac must be non-negative");
  Tensor out = cloud;
  if (std_frac == 0.0) return out;
  Rng rng(seed);
  for (Index i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, std_frac);
  return out;
}

Tensor drop_points(const Tensor& cloud, double ratio, std::uint64_t seed) {
  check_cloud(cloud, "drop_points");
  if (ratio < 0.0 || ratio >= 1.0) throw Error("drop_points: ratio must be in [0, 1)");
  const Index k = cloud.dim(0);
  const Index keep = static_cast<Index>(std::floor(static_cast<double>(k) * (1.0 - ratio)));
  if (keep < 8) {
    throw Error("drop_points: keeping " + std::to_string(keep) + " of " + std::to_string(k) +
                " points leaves fewer than 8");
  }

  // Partial Fisher-Yates picks the kept set; sorting restores input order.
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (Index i = 0; i < keep; ++i) {
    const Index j = i + static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(k - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(keep));
  std::sort(idx.begin(), idx.end());

  Tensor out = Tensor::zeros({keep, 3});
  for (Index i = 0; i < keep; ++i) {
    out.matrix().row(i) = cloud.matrix().row(idx[static_cast<std::size_t>(i)]);
  }
  return out;
}

Tensor repeat_pad(const Tensor& cloud, Index k) {
  check_cloud(cloud, "repeat_pad");
  const Index have = cloud.dim(0);
  if (have == 0) throw Error("repeat_pad: empty cloud");
  if (have >= k) return cloud;
  Tensor out = Tensor::zeros({k, 3});
  for (Index i = 0; i < k; ++i) out.matrix().row(i) = cloud.matrix().row(i % have);
  return out;
}

}  // namespace pointcat
