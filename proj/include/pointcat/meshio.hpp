#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pointcat/tensor.hpp"

namespace pointcat {

struct TriMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> faces;
};

/// ASCII OFF reader. Polygon faces are fan-triangulated; malformed input is
/// rejected with the offending line number.
TriMesh load_off(const std::string& path);

/// K points sampled uniformly on the mesh surface: triangles chosen in
/// proportion to their area, barycentric-uniform within each.
Tensor sample_surface(const TriMesh& mesh, Index k, std::uint64_t seed);

double triangle_area(const TriMesh& mesh, std::size_t face);

}  // namespace pointcat
