#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointcat/checkpoint.hpp"
#include "pointcat/dataset.hpp"
#include "pointcat/optim.hpp"

namespace pointcat {

enum class TrainMode { kPointCat, kClean, kVanillaAt };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kPointCat;
  int epochs = 155;
  Index batch_size = 16;
  double lr0 = 0.001;
  int t1 = 10;
  double eta1 = 0.001;
  int t2 = 4;
  double alpha = 8.0;
  double beta = 0.5;
  double tau_adv = 0.1;
  double tau_sup = 0.1;
  double tau_cen = 0.25;
  double generator_epsilon = 0.04;
  std::uint64_t seed = 0;
  bool disable_sup = false;
  bool disable_cen = false;
  bool disable_generator = false;
  bool disable_prototypes = false;
  double clip_norm = 10.0;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double l_sup = 0.0;
  double l_cen = 0.0;
  double l_adv = 0.0;
  double l_gap = 0.0;
  double l_esc = 0.0;
  double train_acc = 0.0;
  double seconds = 0.0;
};

/// One CSV row per epoch; the wall-clock column is last so determinism
/// comparisons can trim it.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows);

/// Recognition-model training. Per batch the full method runs the prototype
/// ascent, then the generator inner loop against frozen features, then one
/// robust-loss update of encoder + projector; the final layer trains alone
/// at each epoch end. The clean and PGD-based baselines share the same
/// plumbing with a joint cross-entropy step instead.
class Trainer {
 public:
  Trainer(TrainConfig cfg, ModelDims dims, Dataset dataset);

  /// Restores a full training state; every configuration field must match
  /// the checkpoint or the resume is rejected.
  static Trainer resume_from(const std::string& ckpt_path, TrainConfig cfg, Dataset dataset);

  /// Runs the remaining epochs. With an out_dir, writes metrics.csv plus
  /// checkpoint_last.pcat per epoch and checkpoint_final.pcat at the end.
  void run(const std::string& out_dir = "");
  void run_one_epoch();

  int epochs_done() const { return epochs_done_; }
  const std::vector<EpochMetrics>& metrics() const { return metrics_; }
  const std::vector<std::string>& events() const { return events_; }
  ModelBundle& bundle() { return bundle_; }
  const TrainConfig& config() const { return cfg_; }

  Checkpoint checkpoint() const;
  void save(const std::string& path) const;

  /// Clean accuracy of the current model over one split.
  double split_accuracy(std::uint8_t which);

 private:
  Trainer(TrainConfig cfg, Dataset dataset);  // shared init, no bundle yet

  void pointcat_batch(const Tensor& batch, const std::vector<int>& labels, double lr,
                      EpochMetrics& stats);
  void joint_ce_batch(const Tensor& batch, const std::vector<int>& labels, double lr,
                      bool adversarial);
  void final_layer_pass(double lr);
  Tensor pgd_corrupt_batch(const Tensor& batch, const std::vector<int>& labels);
  Tensor generator_corrupt_batch(const Tensor& batch);
  void adam_update(AdamOptimizer& opt, std::vector<ParamSet*> sets, NamedGrads& grads, double lr);
  void check_finite_loss(double loss, const char* where, Index batch_index);

  TrainConfig cfg_;
  Dataset dataset_;
  ModelBundle bundle_;
  AdamOptimizer opt_model_;  // theta: encoder+projector (or encoder+classifier for baselines)
  AdamOptimizer opt_gen_;    // phi
  AdamOptimizer opt_final_;  // theta_f
  Rng shuffle_rng_;
  Rng attack_rng_;
  Rng proto_rng_;
  int epochs_done_ = 0;
  Index current_batch_ = 0;
  std::vector<Index> train_indices_;
  std::vector<EpochMetrics> metrics_;
  std::vector<std::string> events_;
};

}  // namespace pointcat
