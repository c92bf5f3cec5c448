#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointcat/attacks.hpp"
#include "pointcat/checkpoint.hpp"
#include "pointcat/dataset.hpp"

namespace pointcat {

/// Fraction of exact label matches.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Attack success rate. Targeted: fraction of predictions equal to their
/// target, over all attacked inputs. Untargeted: fraction of predictions
/// that left the ground truth, over the inputs the model classified
/// correctly before the attack.
double asr(const std::vector<int>& predictions, const std::vector<int>& ground_truth,
           const std::vector<int>& targets, bool targeted,
           const std::vector<int>& pre_attack_predictions);

struct SuiteSetting {
  enum class Kind { kClean, kAttack, kGaussian, kDrop };
  Kind kind = Kind::kClean;
  std::string name = "clean";
  AttackConfig attack;
  double amount = 0.0;  // gaussian std fraction or drop ratio
};

/// Named preset suites. "paper-targeted" and "paper-untargeted" carry the
/// reference attack settings; "corruptions" the two natural corruptions at
/// both strengths; "toy-untargeted" the desk-scale robustness probe.
std::vector<SuiteSetting> preset_suite(const std::string& name);

struct SuiteSpec {
  std::vector<SuiteSetting> settings;
  std::uint64_t seed = 0;
  int threads = 1;
  Index max_inputs = 0;  // 0 = whole test split
};

struct SuiteRow {
  std::string name;
  std::string config_echo;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double asr = 0.0;
  Index n = 0;
  Index eligible = 0;  // untargeted ASR denominator
  double seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct EvalReport {
  int format_version = 1;
  std::string run_id;
  std::string config_echo;
  std::vector<SuiteRow> rows;
};

/// Runs clean evaluation plus every configured setting over the test split.
/// Per-row failures are recorded and the suite continues. Deterministic for
/// a fixed (bundle, dataset, spec.seed) regardless of thread count.
EvalReport evaluate_suite(ModelBundle& bundle, const Dataset& dataset, const SuiteSpec& spec);

void write_report_csv(const std::string& path, const EvalReport& report);
void write_report_json(const std::string& path, const EvalReport& report);

/// CSV of label, feature columns and projection columns, one row per sample.
/// which = "clean" exports the dataset as-is; "corrupted" first applies the
/// generator at the given epsilon.
void export_features(ModelBundle& bundle, const Dataset& dataset, const std::string& which,
                     double epsilon, const std::string& path);

}  // namespace pointcat
