#pragma once

#include <string>
#include <vector>

#include "pointcat/evalsuite.hpp"
#include "pointcat/synthetic.hpp"
#include "pointcat/trainer.hpp"

namespace pointcat {

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | pcds
  std::vector<std::string> categories = {"sphere", "cube", "cylinder", "cone"};
  Index per_category = 100;
  Index points = 256;
  double jitter = 0.005;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  std::string path;  // pcds file to load, or gen-data output location
};

struct CorruptionConfig {
  double gaussian_std_frac = 0.04;
  double drop_ratio = 0.7;
  std::uint64_t seed = 1;
};

struct EvalConfig {
  std::vector<std::string> presets = {"toy-untargeted"};
  int threads = 1;
  Index max_inputs = 0;
  std::uint64_t seed = 1;
};

/// A full experiment description: dataset, model widths, training,
/// attack, corruption and evaluation settings.
struct RunConfig {
  DataConfig data;
  ModelDims model;
  TrainConfig train;
  AttackConfig attack;
  CorruptionConfig corruption;
  EvalConfig eval;
};

/// Plain-text sectioned key = value format; keys mirror the config field
/// names and unknown keys are rejected with their line number.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// The documented key list, as shipped in example configs.
std::string example_config_text();

Dataset dataset_from_config(const DataConfig& cfg);

}  // namespace pointcat
