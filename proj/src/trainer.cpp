#include "pointcat/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "pointcat/attacks.hpp"
#include "pointcat/losses.hpp"
#include "pointcat/ops.hpp"

namespace pointcat {

namespace {

constexpr Index kEvalChunk = 64;

std::vector<Index> shuffled(std::vector<Index> order, Rng& rng) {
  for (Index i = static_cast<Index>(order.size()) - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

Tensor interleave_batches(const Tensor& clean, const Tensor& corrupted) {
  const Index n = clean.dim(0), k = clean.dim(1);
  Tensor out = Tensor::zeros({2 * n, k, 3});
  auto om = out.matrix(2 * n, k * 3);
  auto cm = clean.matrix(n, k * 3);
  auto am = corrupted.matrix(n, k * 3);
  for (Index i = 0; i < n; ++i) {
    om.row(2 * i) = cm.row(i);
    om.row(2 * i + 1) = am.row(i);
  }
  return out;
}

double uniform_ball_radius(double epsilon, Index dims, Rng& rng) {
  return epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dims));
}

}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kPointCat: return "pointcat";
    case TrainMode::kClean: return "clean";
    case TrainMode::kVanillaAt: return "vanilla_at";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "pointcat") return TrainMode::kPointCat;
  if (name == "clean") return TrainMode::kClean;
  if (name == "vanilla_at") return TrainMode::kVanillaAt;
  throw Error("unknown train mode \"" + name + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (lr0 <= 0.0) throw Error("train config: lr0 must be positive");
  if (tau_adv <= 0.0 || tau_sup <= 0.0 || tau_cen <= 0.0) {
    throw Error("train config: temperatures must be positive");
  }
  if (t1 < 0 || eta1 < 0.0) throw Error("train config: prototype settings must be non-negative");
  if (mode == TrainMode::kPointCat && t2 < 1) {
    throw Error("train config: t2 must be >= 1 in pointcat mode");
  }
  if (generator_epsilon < 0.0) throw Error("train config: generator_epsilon must be >= 0");
  if (disable_sup && (disable_cen || disable_prototypes)) {
    throw Error("train config: disabling both loss terms leaves nothing to train");
  }
}

std::string metrics_csv_header() {
  return "epoch,lr,l_sup,l_cen,l_adv,l_gap,l_esc,train_acc,seconds";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f", m.epoch,
                m.lr, m.l_sup, m.l_cen, m.l_adv, m.l_gap, m.l_esc, m.train_acc, m.seconds);
  return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows) {
  std::ofstream os(path);
  if (!os) throw Error("write_metrics_csv: cannot open \"" + path + "\"");
  os << metrics_csv_header() << "\n";
  for (const auto& m : rows) os << metrics_csv_row(m) << "\n";
}

Trainer::Trainer(TrainConfig cfg, Dataset dataset)
    : cfg_(cfg),
      dataset_(std::move(dataset)),
      shuffle_rng_(derive_seed(cfg.seed, 101)),
      attack_rng_(derive_seed(cfg.seed, 102)),
      proto_rng_(derive_seed(cfg.seed, 103)) {
  cfg_.validate();
  dataset_.validate();
  train_indices_ = dataset_.indices_of(kSplitTrain);
  if (train_indices_.empty()) throw Error("trainer: train split is empty");
  if (dataset_.num_classes() < 2) throw Error("trainer: needs at least 2 categories");
}

Trainer::Trainer(TrainConfig cfg, ModelDims dims, Dataset dataset)
    : Trainer(cfg, std::move(dataset)) {
  dims.num_classes = dataset_.num_classes();
  dims.points = dataset_.clouds[static_cast<std::size_t>(train_indices_[0])].dim(0);
  for (Index i : train_indices_) {
    if (dataset_.clouds[static_cast<std::size_t>(i)].dim(0) != dims.points) {
      throw Error("trainer: train clouds must share K");
    }
  }
  bundle_ = make_bundle(dims, derive_seed(cfg_.seed, 100));
}

void Trainer::adam_update(AdamOptimizer& opt, std::vector<ParamSet*> sets, NamedGrads& grads,
                          double lr) {
  if (clip_global_norm(grads, cfg_.clip_norm)) {
    events_.push_back("gradient clipped at epoch " + std::to_string(epochs_done_) + " batch " +
                      std::to_string(current_batch_));
  }
  for (ParamSet* ps : sets) {
    NamedGrads own;
    for (const auto& entry : ps->entries()) {
      auto it = grads.find(entry.name);
      if (it != grads.end()) own.emplace(it->first, it->second);
    }
    opt.step(*ps, own, lr);
  }
}

void Trainer::check_finite_loss(double loss, const char* where, Index batch_index) {
  if (!std::isfinite(loss)) {
    throw Error("trainer: non-finite " + std::string(where) + " loss at epoch " +
                std::to_string(epochs_done_) + ", batch " + std::to_string(batch_index));
  }
}

Tensor Trainer::pgd_corrupt_batch(const Tensor& batch, const std::vector<int>& labels) {
  const double eps = cfg_.generator_epsilon;
  if (eps <= 0.0) return batch;
  const Index n = batch.dim(0), k = batch.dim(1);
  const double step = attack_step_size(eps, k, 3, cfg_.t2);

  Tensor delta = Tensor::zeros({n, k, 3});
  auto dm = delta.matrix(n, k * 3);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k * 3; ++j) dm(i, j) = attack_rng_.normal();
    const double norm = dm.row(i).norm();
    const double radius = uniform_ball_radius(eps, k * 3, attack_rng_);
    if (norm > 0.0) dm.row(i) *= radius / norm;
  }

  for (int it = 0; it < cfg_.t2; ++it) {
    Graph g;
    NodeId x = g.leaf(batch);
    NodeId d = g.leaf(delta);
    NodeId xp = ops::add(g, x, d);
    NodeId feats = encode(g, bundle_.encoder, xp, Mode::kEval).out;
    NodeId logits = classify(g, bundle_.classifier, feats).out;
    NodeId loss = losses::cross_entropy(g, logits, labels);
    std::vector<NodeId> watch = {d};
    auto grads = g.backward(loss, watch);
    if (!grads.has(d)) continue;
    auto gm = grads.at(d).matrix(n, k * 3);
    for (Index i = 0; i < n; ++i) {
      const double gnorm = gm.row(i).norm();
      if (gnorm == 0.0) continue;
      dm.row(i) += (step / gnorm) * gm.row(i);
      const double dnorm = dm.row(i).norm();
      if (dnorm > eps) dm.row(i) *= eps / dnorm;
    }
  }

  Tensor out = batch;
  out.array() += delta.array();
  return out;
}

Tensor Trainer::generator_corrupt_batch(const Tensor& batch) {
  const Index n = batch.dim(0), k = batch.dim(1);
  Tensor raw = generate_noise_values(bundle_.generator, batch);
  Tensor out = batch;
  auto rm = raw.matrix(n, k * 3);
  auto om = out.matrix(n, k * 3);
  for (Index i = 0; i < n; ++i) {
    const double norm = rm.row(i).norm();
    const double scale = norm <= cfg_.generator_epsilon || norm == 0.0
                             ? 1.0
                             : cfg_.generator_epsilon / norm;
    om.row(i) += scale * rm.row(i);
  }
  return out;
}

void Trainer::pointcat_batch(const Tensor& batch, const std::vector<int>& labels, double lr,
                             EpochMetrics& stats) {
  const Index n = batch.dim(0), k = batch.dim(1);

  if (!cfg_.disable_prototypes) {
    const auto st = update_prototypes(bundle_.bank, bundle_.encoder, bundle_.projector,
                                      bundle_.classifier, cfg_.t1, cfg_.eta1, proto_rng_);
    if (st.resets > 0) {
      events_.push_back(std::to_string(st.resets) + " prototype reset(s) at epoch " +
                        std::to_string(epochs_done_) + " batch " +
                        std::to_string(current_batch_));
    }
  }

  // Clean-side projections are constants for the whole batch: they depend
  // only on theta, which the inner loop never touches.
  Tensor z_clean;
  {
    Graph g;
    NodeId feats = encode(g, bundle_.encoder, g.leaf(batch), Mode::kEval).out;
    z_clean = g.value(project(g, bundle_.projector, feats, Mode::kEval).out);
  }

  if (!cfg_.disable_generator) {
    for (int t = 0; t < cfg_.t2; ++t) {
      Graph g;
      NodeId x = g.leaf(batch);
      auto gen = generate_noise(g, bundle_.generator, x, Mode::kTrain);
      NodeId clipped =
          ops::row_l2_clip(g, ops::reshape(g, gen.out, {n, k * 3}), cfg_.generator_epsilon);
      NodeId xp = ops::add(g, x, ops::reshape(g, clipped, {n, k, 3}));
      NodeId feats = encode(g, bundle_.encoder, xp, Mode::kEval).out;
      NodeId z_adv = project(g, bundle_.projector, feats, Mode::kEval).out;

      NodeId gap = losses::gap_from_halves(g, g.leaf(z_clean), z_adv, cfg_.tau_adv);
      NodeId loss = gap;
      NodeId esc = -1;
      if (!cfg_.disable_prototypes) {
        esc = losses::escape_from_halves(g, z_adv, g.leaf(bundle_.bank.projections), labels,
                                         cfg_.tau_adv);
        loss = ops::add(g, gap, ops::scalar_scale(g, esc, cfg_.beta));
      }
      check_finite_loss(g.value(loss).value(), "generator", current_batch_);

      std::vector<NodeId> watch;
      append_watch(gen.bound, watch);
      auto grads = g.backward(loss, watch);
      NamedGrads named;
      collect_grads(gen.bound, grads, named);
      adam_update(opt_gen_, {&bundle_.generator}, named, lr);

      if (t == cfg_.t2 - 1) {
        stats.l_gap += g.value(gap).value();
        stats.l_esc += esc >= 0 ? g.value(esc).value() : 0.0;
        stats.l_adv += g.value(loss).value();
      }
    }
  }

  const Tensor corrupted = cfg_.disable_generator ? pgd_corrupt_batch(batch, labels)
                                                  : generator_corrupt_batch(batch);

  // Outer step on the interleaved 2N batch.
  Graph g;
  NodeId x2 = g.leaf(interleave_batches(batch, corrupted));
  auto encr = encode(g, bundle_.encoder, x2, Mode::kTrain);
  auto projr = project(g, bundle_.projector, encr.out, Mode::kTrain);
  losses::ContrastBatch cb{projr.out, labels, cfg_.tau_sup, cfg_.tau_cen, cfg_.tau_adv};

  const bool use_cen = !cfg_.disable_cen && !cfg_.disable_prototypes;
  NodeId loss = -1;
  if (cfg_.disable_sup) {
    NodeId cen = losses::centralizing(g, cb, g.leaf(bundle_.bank.projections));
    loss = ops::scalar_scale(g, cen, cfg_.alpha);
    stats.l_cen += g.value(cen).value();
  } else if (!use_cen) {
    NodeId sup = losses::sup_contrastive(g, cb);
    loss = sup;
    stats.l_sup += g.value(sup).value();
  } else {
    NodeId sup = losses::sup_contrastive(g, cb);
    NodeId cen = losses::centralizing(g, cb, g.leaf(bundle_.bank.projections));
    loss = ops::add(g, sup, ops::scalar_scale(g, cen, cfg_.alpha));
    stats.l_sup += g.value(sup).value();
    stats.l_cen += g.value(cen).value();
  }
  check_finite_loss(g.value(loss).value(), "robust", current_batch_);

  std::vector<NodeId> watch;
  append_watch(encr.bound, watch);
  append_watch(projr.bound, watch);
  auto grads = g.backward(loss, watch);
  NamedGrads named;
  collect_grads(encr.bound, grads, named);
  collect_grads(projr.bound, grads, named);
  adam_update(opt_model_, {&bundle_.encoder, &bundle_.projector}, named, lr);
}

void Trainer::joint_ce_batch(const Tensor& batch, const std::vector<int>& labels, double lr,
                             bool adversarial) {
  const Tensor input = adversarial ? pgd_corrupt_batch(batch, labels) : batch;
  Graph g;
  auto encr = encode(g, bundle_.encoder, g.leaf(input), Mode::kTrain);
  auto clsr = classify(g, bundle_.classifier, encr.out);
  NodeId loss = losses::cross_entropy(g, clsr.out, labels);
  check_finite_loss(g.value(loss).value(), "cross-entropy", current_batch_);

  std::vector<NodeId> watch;
  append_watch(encr.bound, watch);
  append_watch(clsr.bound, watch);
  auto grads = g.backward(loss, watch);
  NamedGrads named;
  collect_grads(encr.bound, grads, named);
  collect_grads(clsr.bound, grads, named);
  adam_update(opt_model_, {&bundle_.encoder, &bundle_.classifier}, named, lr);
}

void Trainer::final_layer_pass(double lr) {
  const Index total = static_cast<Index>(train_indices_.size());
  for (Index start = 0; start < total; start += cfg_.batch_size) {
    const Index count = std::min(cfg_.batch_size, total - start);
    std::vector<Tensor> clouds;
    std::vector<int> labels;
    for (Index i = 0; i < count; ++i) {
      const Index idx = train_indices_[static_cast<std::size_t>(start + i)];
      clouds.push_back(dataset_.clouds[static_cast<std::size_t>(idx)]);
      labels.push_back(dataset_.labels[static_cast<std::size_t>(idx)]);
    }
    Graph g;
    NodeId feats = encode(g, bundle_.encoder, g.leaf(stack_clouds(clouds)), Mode::kEval).out;
    auto clsr = classify(g, bundle_.classifier, feats);
    NodeId loss = losses::cross_entropy(g, clsr.out, labels);
    check_finite_loss(g.value(loss).value(), "final-layer", start / cfg_.batch_size);

    std::vector<NodeId> watch;
    append_watch(clsr.bound, watch);
    auto grads = g.backward(loss, watch);
    NamedGrads named;
    collect_grads(clsr.bound, grads, named);
    adam_update(opt_final_, {&bundle_.classifier}, named, lr);
  }
}

double Trainer::split_accuracy(std::uint8_t which) {
  const auto indices = dataset_.indices_of(which);
  if (indices.empty()) throw Error("trainer: split is empty");
  Index correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const std::size_t count = std::min<std::size_t>(kEvalChunk, indices.size() - start);
    std::vector<Tensor> clouds;
    for (std::size_t i = 0; i < count; ++i) {
      clouds.push_back(dataset_.clouds[static_cast<std::size_t>(indices[start + i])]);
    }
    const Tensor feats = encode_values(bundle_.encoder, stack_clouds(clouds));
    const auto preds = argmax_rows(classify_values(bundle_.classifier, feats));
    for (std::size_t i = 0; i < count; ++i) {
      if (preds[i] == dataset_.labels[static_cast<std::size_t>(indices[start + i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void Trainer::run_one_epoch() {
  if (epochs_done_ >= cfg_.epochs) throw Error("trainer: all epochs already done");
  const auto t0 = std::chrono::steady_clock::now();
  const double lr = cosine_anneal(cfg_.lr0, epochs_done_, cfg_.epochs);

  const auto order = shuffled(train_indices_, shuffle_rng_);
  EpochMetrics stats;
  Index batches = 0;
  const Index total = static_cast<Index>(order.size());
  for (Index start = 0; start < total; start += cfg_.batch_size) {
    const Index count = std::min(cfg_.batch_size, total - start);
    std::vector<Tensor> clouds;
    std::vector<int> labels;
    for (Index i = 0; i < count; ++i) {
      const Index idx = order[static_cast<std::size_t>(start + i)];
      clouds.push_back(dataset_.clouds[static_cast<std::size_t>(idx)]);
      labels.push_back(dataset_.labels[static_cast<std::size_t>(idx)]);
    }
    const Tensor batch = stack_clouds(clouds);
    current_batch_ = start / cfg_.batch_size;

    switch (cfg_.mode) {
      case TrainMode::kPointCat: pointcat_batch(batch, labels, lr, stats); break;
      case TrainMode::kClean: joint_ce_batch(batch, labels, lr, false); break;
      case TrainMode::kVanillaAt: joint_ce_batch(batch, labels, lr, true); break;
    }
    ++batches;
  }

  if (cfg_.mode == TrainMode::kPointCat) final_layer_pass(lr);

  stats.epoch = epochs_done_;
  stats.lr = lr;
  if (batches > 0) {
    stats.l_sup /= batches;
    stats.l_cen /= batches;
    stats.l_adv /= batches;
    stats.l_gap /= batches;
    stats.l_esc /= batches;
  }
  stats.train_acc = split_accuracy(kSplitTrain);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  metrics_.push_back(stats);
  ++epochs_done_;
}

void Trainer::run(const std::string& out_dir) {
  namespace fs = std::filesystem;
  const bool persist = !out_dir.empty();
  if (persist) {
    fs::create_directories(out_dir);
    save(out_dir + "/checkpoint_last.pcat");
  }
  while (epochs_done_ < cfg_.epochs) {
    run_one_epoch();
    if (persist) {
      save(out_dir + "/checkpoint_last.pcat");
      write_metrics_csv(out_dir + "/metrics.csv", metrics_);
    }
  }
  if (persist) {
    save(out_dir + "/checkpoint_final.pcat");
    write_metrics_csv(out_dir + "/metrics.csv", metrics_);
  }
}

namespace {

void add_optimizer(Checkpoint& ck, const std::string& prefix, const AdamOptimizer& opt) {
  ck.add(prefix + "/step", Tensor::scalar(static_cast<double>(opt.step_count())));
  for (const auto& [name, mom] : opt.moments()) {
    ck.add(prefix + "/" + name + "/m", mom.m);
    ck.add(prefix + "/" + name + "/v", mom.v);
  }
}

void restore_optimizer(const Checkpoint& ck, const std::string& prefix, AdamOptimizer& opt) {
  opt.set_step_count(static_cast<std::int64_t>(ck.at(prefix + "/step").value()));
  for (const auto& [name, value] : ck.entries) {
    if (!name.starts_with(prefix + "/") || !name.ends_with("/m")) continue;
    const std::string param =
        name.substr(prefix.size() + 1, name.size() - prefix.size() - 3);
    if (param == "step") continue;
    auto& mom = opt.moments()[param];
    mom.m = value;
    mom.v = ck.at(prefix + "/" + param + "/v");
  }
}

struct MetaField {
  const char* name;
  double value;
};

std::vector<MetaField> meta_fields(const TrainConfig& c) {
  return {
      {"meta/mode", static_cast<double>(static_cast<int>(c.mode))},
      {"meta/epochs", static_cast<double>(c.epochs)},
      {"meta/batch_size", static_cast<double>(c.batch_size)},
      {"meta/lr0", c.lr0},
      {"meta/t1", static_cast<double>(c.t1)},
      {"meta/eta1", c.eta1},
      {"meta/t2", static_cast<double>(c.t2)},
      {"meta/alpha", c.alpha},
      {"meta/beta", c.beta},
      {"meta/tau_adv", c.tau_adv},
      {"meta/tau_sup", c.tau_sup},
      {"meta/tau_cen", c.tau_cen},
      {"meta/generator_epsilon", c.generator_epsilon},
      {"meta/disable_sup", c.disable_sup ? 1.0 : 0.0},
      {"meta/disable_cen", c.disable_cen ? 1.0 : 0.0},
      {"meta/disable_generator", c.disable_generator ? 1.0 : 0.0},
      {"meta/disable_prototypes", c.disable_prototypes ? 1.0 : 0.0},
      {"meta/clip_norm", c.clip_norm},
  };
}

}  // namespace

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  bundle_into_checkpoint(bundle_, ck);
  add_optimizer(ck, "opt/model", opt_model_);
  add_optimizer(ck, "opt/gen", opt_gen_);
  add_optimizer(ck, "opt/final", opt_final_);
  ck.add("rng/shuffle", encode_u64(shuffle_rng_.state()));
  ck.add("rng/attack", encode_u64(attack_rng_.state()));
  ck.add("rng/proto", encode_u64(proto_rng_.state()));
  ck.add("meta/epoch", Tensor::scalar(static_cast<double>(epochs_done_)));
  ck.add("meta/seed", encode_u64(cfg_.seed));
  ck.add("meta/dataset_hash", encode_u64(dataset_hash(dataset_)));
  for (const auto& f : meta_fields(cfg_)) ck.add(f.name, Tensor::scalar(f.value));
  return ck;
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, checkpoint());
}

Trainer Trainer::resume_from(const std::string& ckpt_path, TrainConfig cfg, Dataset dataset) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  Trainer t(cfg, std::move(dataset));

  if (decode_u64(ck.at("meta/seed")) != cfg.seed) {
    throw Error("resume: seed differs from the checkpoint");
  }
  for (const auto& f : meta_fields(cfg)) {
    if (ck.at(f.name).value() != f.value) {
      throw Error(std::string("resume: ") + f.name + " differs from the checkpoint");
    }
  }
  if (decode_u64(ck.at("meta/dataset_hash")) != dataset_hash(t.dataset_)) {
    throw Error("resume: dataset differs from the one the checkpoint was trained on");
  }

  t.bundle_ = bundle_from_checkpoint(ck);
  restore_optimizer(ck, "opt/model", t.opt_model_);
  restore_optimizer(ck, "opt/gen", t.opt_gen_);
  restore_optimizer(ck, "opt/final", t.opt_final_);
  t.shuffle_rng_.set_state(decode_u64(ck.at("rng/shuffle")));
  t.attack_rng_.set_state(decode_u64(ck.at("rng/attack")));
  t.proto_rng_.set_state(decode_u64(ck.at("rng/proto")));
  t.epochs_done_ = static_cast<int>(ck.at("meta/epoch").value());
  return t;
}

}  // namespace pointcat
