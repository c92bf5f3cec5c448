#include "pointcat/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pointcat/binio.hpp"

namespace pointcat {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<Index> Dataset::indices_of(std::uint8_t which) const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i) {
    if (split[static_cast<std::size_t>(i)] == which) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  if (clouds.size() != labels.size() || clouds.size() != split.size()) {
    throw Error("dataset: clouds/labels/split sizes differ");
  }
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Tensor& c = clouds[i];
    if (c.rank() != 2 || c.dim(1) != 3 || c.dim(0) < 8) {
      throw Error("dataset: cloud " + std::to_string(i) + " has invalid shape " + c.shape_str());
    }
    if (!c.all_finite()) throw Error("dataset: cloud " + std::to_string(i) + " has non-finite coordinates");
    if (labels[i] < 0 || labels[i] >= static_cast<int>(category_names.size())) {
      throw Error("dataset: label " + std::to_string(labels[i]) + " out of range at cloud " +
                  std::to_string(i));
    }
  }
}

Tensor normalize_unit_cube(const Tensor& cloud) {
  if (cloud.rank() != 2 || cloud.dim(1) != 3 || cloud.dim(0) < 1) {
    throw Error("normalize_unit_cube: expects a non-empty (K,3) cloud, got " + cloud.shape_str());
  }
  Tensor out = cloud;
  auto m = out.matrix();
  const Eigen::RowVector3d centroid = m.colwise().mean();
  m.rowwise() -= centroid;
  const double extent = m.array().abs().maxCoeff();
  if (extent == 0.0) throw Error("normalize_unit_cube: degenerate cloud, all points identical");
  m *= 0.5 / extent;
  return out;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_dataset: cannot open \"" + path + "\"");
  os.write(kMagic, 4);
  binio::write_raw<std::uint32_t>(os, kVersion);
  binio::write_string(os, ds.provenance);
  binio::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(ds.category_names.size()));
  for (const auto& name : ds.category_names) binio::write_string(os, name);
  binio::write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(ds.clouds.size()));
  for (std::size_t i = 0; i < ds.clouds.size(); ++i) {
    const Tensor& c = ds.clouds[i];
    binio::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(c.dim(0)));
    binio::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(ds.labels[i]));
    binio::write_raw<std::uint8_t>(os, ds.split[i]);
    binio::write_f64_block(os, c.data(), c.size());
  }
  if (!os) throw Error("save_dataset: write failed for \"" + path + "\"");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_dataset: cannot open \"" + path + "\"");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("load_dataset: \"" + path + "\" is not a PCDS file (bad magic)");
  }
  const auto version = binio::read_raw<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw Error("load_dataset: unsupported PCDS version " + std::to_string(version));
  }
  Dataset ds;
  ds.provenance = binio::read_string(is, "provenance");
  const auto categories = binio::read_raw<std::uint32_t>(is, "category count");
  for (std::uint32_t i = 0; i < categories; ++i) {
    ds.category_names.push_back(binio::read_string(is, "category name"));
  }
  const auto count = binio::read_raw<std::uint64_t>(is, "cloud count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto k = binio::read_raw<std::uint32_t>(is, "point count");
    const auto label = binio::read_raw<std::uint32_t>(is, "label");
    const auto tag = binio::read_raw<std::uint8_t>(is, "split tag");
    Tensor c = Tensor::zeros({static_cast<Index>(k), 3});
    binio::read_f64_block(is, c.data(), c.size(), "coordinates");
    ds.clouds.push_back(std::move(c));
    ds.labels.push_back(static_cast<int>(label));
    ds.split.push_back(tag);
  }
  ds.validate();
  return ds;
}

void export_xyz(const std::string& path, const Tensor& cloud) {
  if (cloud.rank() != 2 || cloud.dim(1) != 3) {
    throw Error("export_xyz: expects a (K,3) cloud, got " + cloud.shape_str());
  }
  std::ofstream os(path);
  if (!os) throw Error("export_xyz: cannot open \"" + path + "\"");
  char line[96];
  for (Index i = 0; i < cloud.dim(0); ++i) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", cloud.matrix()(i, 0),
                  cloud.matrix()(i, 1), cloud.matrix()(i, 2));
    os << line;
  }
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : ds.category_names) mix_bytes(name.data(), name.size());
  for (std::size_t i = 0; i < ds.clouds.size(); ++i) {
    const std::int64_t label = ds.labels[i];
    mix_bytes(&label, sizeof(label));
    mix_bytes(&ds.split[i], 1);
    mix_bytes(ds.clouds[i].data(), static_cast<std::size_t>(ds.clouds[i].size()) * 8);
  }
  return h;
}

}  // namespace pointcat
