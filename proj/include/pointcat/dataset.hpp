#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointcat/tensor.hpp"

namespace pointcat {

inline constexpr std::uint8_t kSplitTrain = 0;
inline constexpr std::uint8_t kSplitTest = 1;

/// Labeled point clouds with split tags and a provenance record.
struct Dataset {
  std::vector<Tensor> clouds;  // each (K_i, 3)
  std::vector<int> labels;
  std::vector<std::uint8_t> split;
  std::vector<std::string> category_names;
  std::string provenance;

  Index size() const { return static_cast<Index>(clouds.size()); }
  Index num_classes() const { return static_cast<Index>(category_names.size()); }
  std::vector<Index> indices_of(std::uint8_t which) const;
  void validate() const;
};

/// Translates the centroid to the origin and uniformly rescales so the
/// largest absolute coordinate lands on 0.5; aspect ratios are preserved.
Tensor normalize_unit_cube(const Tensor& cloud);

/// "PCDS" container, bit-exact round trip.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

/// Plain-text export, one "x y z" line per point.
void export_xyz(const std::string& path, const Tensor& cloud);

/// FNV-1a over the canonical byte representation; test and provenance aid.
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace pointcat
