#include "pointcat/meshio.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pointcat/rng.hpp"

namespace pointcat {

namespace {

struct LineReader {
  std::ifstream is;
  int line_no = 0;

  explicit LineReader(const std::string& path) : is(path) {}

  /// Next content line, skipping blanks and # comments.
  bool next(std::string& out) {
    std::string line;
    while (std::getline(is, line)) {
      ++line_no;
      const auto start = line.find_first_not_of(" \t\r\n");
      if (start == std::string::npos || line[start] == '#') continue;
      out = line;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("load_off: line " + std::to_string(line_no) + ": " + what);
  }
  [[noreturn]] void fail_eof(const std::string& missing) const {
    throw Error("load_off: truncated file, missing " + missing);
  }
};

double parse_double(const std::string& tok, LineReader& r) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (...) {
    r.fail("non-numeric field \"" + tok + "\"");
  }
  if (used != tok.size()) r.fail("non-numeric field \"" + tok + "\"");
  return v;
}

long parse_long(const std::string& tok, LineReader& r) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (...) {
    r.fail("non-numeric field \"" + tok + "\"");
  }
  if (used != tok.size()) r.fail("non-numeric field \"" + tok + "\"");
  return v;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

}  // namespace

TriMesh load_off(const std::string& path) {
  LineReader r(path);
  if (!r.is) throw Error("load_off: cannot open \"" + path + "\"");

  std::string line;
  if (!r.next(line)) r.fail_eof("OFF header");
  auto toks = tokens_of(line);
  if (toks.empty() || toks[0] != "OFF") r.fail("expected OFF header");
  toks.erase(toks.begin());

  // Counts may follow the header on the same line.
  if (toks.empty()) {
    if (!r.next(line)) r.fail_eof("counts line");
    toks = tokens_of(line);
  }
  if (toks.size() < 2) r.fail("malformed counts line");
  const long nv = parse_long(toks[0], r);
  const long nf = parse_long(toks[1], r);
  if (nv < 0 || nf < 0) r.fail("negative counts");

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    if (!r.next(line)) r.fail_eof("vertex " + std::to_string(i) + " of " + std::to_string(nv));
    toks = tokens_of(line);
    if (toks.size() < 3) r.fail("vertex line needs 3 coordinates");
    mesh.vertices.push_back(
        {parse_double(toks[0], r), parse_double(toks[1], r), parse_double(toks[2], r)});
  }

  for (long i = 0; i < nf; ++i) {
    if (!r.next(line)) r.fail_eof("face " + std::to_string(i) + " of " + std::to_string(nf));
    toks = tokens_of(line);
    if (toks.empty()) r.fail("empty face line");
    const long sides = parse_long(toks[0], r);
    if (sides < 3) r.fail("face with fewer than 3 vertices");
    if (static_cast<long>(toks.size()) < sides + 1) r.fail("face line shorter than its count");
    std::vector<int> poly;
    for (long s = 0; s < sides; ++s) {
      const long idx = parse_long(toks[static_cast<std::size_t>(s + 1)], r);
      if (idx < 0 || idx >= nv) {
        r.fail("vertex index " + std::to_string(idx) + " out of range [0, " + std::to_string(nv) +
               ")");
      }
      poly.push_back(static_cast<int>(idx));
    }
    for (std::size_t s = 1; s + 1 < poly.size(); ++s) {
      mesh.faces.push_back({poly[0], poly[s], poly[s + 1]});
    }
  }
  return mesh;
}

double triangle_area(const TriMesh& mesh, std::size_t face) {
  const auto& f = mesh.faces[face];
  const Eigen::Vector3d a{mesh.vertices[static_cast<std::size_t>(f[0])].data()};
  const Eigen::Vector3d b{mesh.vertices[static_cast<std::size_t>(f[1])].data()};
  const Eigen::Vector3d c{mesh.vertices[static_cast<std::size_t>(f[2])].data()};
  return 0.5 * (b - a).cross(c - a).norm();
}

Tensor sample_surface(const TriMesh& mesh, Index k, std::uint64_t seed) {
  if (mesh.faces.empty()) throw Error("sample_surface: mesh has no triangles");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    total += triangle_area(mesh, i);
    cumulative[i] = total;
  }
  if (total <= 0.0) throw Error("sample_surface: zero total surface area");

  Rng rng(seed);
  Tensor cloud = Tensor::zeros({k, 3});
  for (Index i = 0; i < k; ++i) {
    const double pick = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t face = std::min(static_cast<std::size_t>(it - cumulative.begin()),
                                      mesh.faces.size() - 1);
    const auto& f = mesh.faces[face];
    const Eigen::Vector3d a{mesh.vertices[static_cast<std::size_t>(f[0])].data()};
    const Eigen::Vector3d b{mesh.vertices[static_cast<std::size_t>(f[1])].data()};
    const Eigen::Vector3d c{mesh.vertices[static_cast<std::size_t>(f[2])].data()};
    const double s = std::sqrt(rng.uniform());
    const double t = rng.uniform();
    cloud.matrix().row(i) = ((1.0 - s) * a + s * (1.0 - t) * b + s * t * c).transpose();
  }
  return cloud;
}

}  // namespace pointcat
