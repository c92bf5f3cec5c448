#include "pointcat/synthetic.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace pointcat {

namespace {

using Eigen::Vector3d;

Vector3d sphere_point(double radius, Rng& rng) {
  Vector3d v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v.norm() < 1e-12);
  return v * (radius / v.norm());
}

Vector3d cube_point(Rng& rng) {
  const int face = static_cast<int>(rng.bounded(6));
  const double u = rng.uniform(-0.5, 0.5);
  const double v = rng.uniform(-0.5, 0.5);
  const double s = face % 2 == 0 ? 0.5 : -0.5;
  switch (face / 2) {
    case 0: return {s, u, v};
    case 1: return {u, s, v};
    default: return {u, v, s};
  }
}

Vector3d cylinder_point(Rng& rng) {
  const double r = 0.3, h = 0.5;  // half-height
  const double side_area = 2.0 * M_PI * r * 2.0 * h;
  const double cap_area = M_PI * r * r;
  const double pick = rng.uniform() * (side_area + 2.0 * cap_area);
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  if (pick < side_area) {
    return {r * std::cos(angle), r * std::sin(angle), rng.uniform(-h, h)};
  }
  const double rad = r * std::sqrt(rng.uniform());
  const double z = pick < side_area + cap_area ? h : -h;
  return {rad * std::cos(angle), rad * std::sin(angle), z};
}

Vector3d cone_point(Rng& rng) {
  const double r = 0.4, apex_z = 0.5, base_z = -0.5;
  const double height = apex_z - base_z;
  const double slant = std::sqrt(r * r + height * height);
  const double side_area = M_PI * r * slant;
  const double base_area = M_PI * r * r;
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  if (rng.uniform() * (side_area + base_area) < side_area) {
    // Lateral surface: distance fraction from the apex with density ~ t.
    const double t = std::sqrt(rng.uniform());
    return {t * r * std::cos(angle), t * r * std::sin(angle), apex_z - t * height};
  }
  const double rad = r * std::sqrt(rng.uniform());
  return {rad * std::cos(angle), rad * std::sin(angle), base_z};
}

Vector3d torus_point(Rng& rng) {
  const double major = 0.35, minor = 0.125;
  // Uniform surface area needs density ~ (R + r cos(theta)); rejection on
  // the tube angle delivers it.
  double tube;
  do {
    tube = rng.uniform(0.0, 2.0 * M_PI);
  } while (rng.uniform() * (major + minor) > major + minor * std::cos(tube));
  const double ring = rng.uniform(0.0, 2.0 * M_PI);
  const double rad = major + minor * std::cos(tube);
  return {rad * std::cos(ring), rad * std::sin(ring), minor * std::sin(tube)};
}

Vector3d plane_cross_point(Rng& rng) {
  const double u = rng.uniform(-0.5, 0.5);
  const double v = rng.uniform(-0.5, 0.5);
  return rng.bounded(2) == 0 ? Vector3d{u, 0.0, v} : Vector3d{0.0, u, v};
}

Vector3d triangle_point(const Vector3d& a, const Vector3d& b, const Vector3d& c, Rng& rng) {
  const double s = std::sqrt(rng.uniform());
  const double t = rng.uniform();
  return (1.0 - s) * a + s * (1.0 - t) * b + s * t * c;
}

Vector3d pyramid_point(Rng& rng) {
  const double half = 0.5, base_z = -0.4;
  const Vector3d apex{0.0, 0.0, 0.6};
  const Vector3d corners[4] = {{half, half, base_z},
                               {-half, half, base_z},
                               {-half, -half, base_z},
                               {half, -half, base_z}};
  const double base_area = 4.0 * half * half;
  const double side_area =
      4.0 * (0.5 * ((corners[1] - corners[0]).cross(apex - corners[0])).norm());
  if (rng.uniform() * (base_area + side_area) < base_area) {
    return {rng.uniform(-half, half), rng.uniform(-half, half), base_z};
  }
  const int side = static_cast<int>(rng.bounded(4));
  return triangle_point(corners[side], corners[(side + 1) % 4], apex, rng);
}

Vector3d capsule_point(Rng& rng) {
  const double r = 0.25, h = 0.3;  // cylinder half-height
  const double side_area = 2.0 * M_PI * r * 2.0 * h;
  const double caps_area = 4.0 * M_PI * r * r;  // two hemispheres
  if (rng.uniform() * (side_area + caps_area) < side_area) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    return {r * std::cos(angle), r * std::sin(angle), rng.uniform(-h, h)};
  }
  Vector3d p = sphere_point(r, rng);
  p.z() = p.z() >= 0.0 ? p.z() + h : p.z() - h;
  return p;
}

Vector3d primitive_point(const std::string& name, Rng& rng) {
  if (name == "sphere") return sphere_point(0.5, rng);
  if (name == "cube") return cube_point(rng);
  if (name == "cylinder") return cylinder_point(rng);
  if (name == "cone") return cone_point(rng);
  if (name == "torus") return torus_point(rng);
  if (name == "plane-cross") return plane_cross_point(rng);
  if (name == "pyramid") return pyramid_point(rng);
  if (name == "capsule") return capsule_point(rng);
  throw Error("gen_synthetic: unknown primitive \"" + name + "\"");
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-12) q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

std::vector<std::string> synthetic_primitives() {
  return {"sphere", "cube", "cylinder", "cone", "torus", "plane-cross", "pyramid", "capsule"};
}

Tensor sample_primitive(const std::string& name, Index k, Rng& rng) {
  Tensor cloud = Tensor::zeros({k, 3});
  for (Index i = 0; i < k; ++i) {
    const Vector3d p = primitive_point(name, rng);
    cloud.matrix().row(i) = p.transpose();
  }
  return cloud;
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.categories.size() < 2) throw Error("gen_synthetic: needs at least 2 categories");
  if (spec.points < 8) throw Error("gen_synthetic: needs at least 8 points per cloud");
  if (spec.per_category < 1) throw Error("gen_synthetic: per_category must be >= 1");
  const auto known = synthetic_primitives();
  for (const auto& c : spec.categories) {
    if (std::find(known.begin(), known.end(), c) == known.end()) {
      throw Error("gen_synthetic: unknown primitive \"" + c + "\"");
    }
  }

  Dataset ds;
  ds.category_names = spec.categories;
  ds.provenance = "synthetic seed=" + std::to_string(seed) +
                  " per_category=" + std::to_string(spec.per_category) +
                  " points=" + std::to_string(spec.points);

  for (std::size_t cat = 0; cat < spec.categories.size(); ++cat) {
    for (Index inst = 0; inst < spec.per_category; ++inst) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cat) * 1000003ULL +
                                    static_cast<std::uint64_t>(inst)));
      Tensor cloud = sample_primitive(spec.categories[cat], spec.points, rng);
      const Eigen::Matrix3d rot = random_rotation(rng);
      const Eigen::Array3d scale{rng.uniform(0.7, 1.3), rng.uniform(0.7, 1.3),
                                 rng.uniform(0.7, 1.3)};
      auto m = cloud.matrix();
      for (Index i = 0; i < m.rows(); ++i) {
        Vector3d p = m.row(i).transpose();
        p = rot * (p.array() * scale).matrix();
        p += Vector3d{rng.normal(0.0, spec.jitter), rng.normal(0.0, spec.jitter),
                      rng.normal(0.0, spec.jitter)};
        m.row(i) = p.transpose();
      }
      ds.clouds.push_back(normalize_unit_cube(cloud));
      ds.labels.push_back(static_cast<int>(cat));
      ds.split.push_back(kSplitTrain);
    }
  }

  // Per-category deterministic shuffle decides the train/test split.
  const Index test_count =
      spec.per_category - static_cast<Index>(std::llround(
                              std::floor(static_cast<double>(spec.per_category) * spec.train_fraction)));
  for (std::size_t cat = 0; cat < spec.categories.size(); ++cat) {
    std::vector<Index> order(static_cast<std::size_t>(spec.per_category));
    for (Index i = 0; i < spec.per_category; ++i) {
      order[static_cast<std::size_t>(i)] = static_cast<Index>(cat) * spec.per_category + i;
    }
    Rng rng(derive_seed(seed, 0xC0FFEEULL + cat));
    for (Index i = spec.per_category - 1; i > 0; --i) {
      const Index j = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    for (Index i = 0; i < test_count; ++i) {
      ds.split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = kSplitTest;
    }
  }

  ds.validate();
  return ds;
}

}  // namespace pointcat
