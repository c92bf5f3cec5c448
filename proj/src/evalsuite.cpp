#include "pointcat/evalsuite.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include "pointcat/corruptions.hpp"

namespace pointcat {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw Error("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw Error("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double asr(const std::vector<int>& predictions, const std::vector<int>& ground_truth,
           const std::vector<int>& targets, bool targeted,
           const std::vector<int>& pre_attack_predictions) {
  const std::size_t n = predictions.size();
  if (ground_truth.size() != n) throw Error("asr: prediction/ground-truth size mismatch");
  if (targeted) {
    if (targets.size() != n) throw Error("asr: targeted mode needs one target per input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (targets[i] == ground_truth[i]) {
        throw Error("asr: target equals ground truth at input " + std::to_string(i));
      }
      if (predictions[i] == targets[i]) ++hits;
    }
    if (n == 0) throw Error("asr: empty input");
    return static_cast<double>(hits) / static_cast<double>(n);
  }
  if (pre_attack_predictions.size() != n) {
    throw Error("asr: untargeted mode needs pre-attack predictions");
  }
  std::size_t eligible = 0, flips = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pre_attack_predictions[i] != ground_truth[i]) continue;
    ++eligible;
    if (predictions[i] != ground_truth[i]) ++flips;
  }
  if (eligible == 0) {
    throw Error("asr: no eligible inputs (0 of " + std::to_string(n) +
                " classified correctly before the attack)");
  }
  return static_cast<double>(flips) / static_cast<double>(eligible);
}

namespace {

AttackConfig paper_attack(AttackKind kind, bool targeted) {
  AttackConfig cfg;
  cfg.kind = kind;
  cfg.targeted = targeted;
  if (targeted) {
    cfg.epsilon = 0.08;
    cfg.iterations = 50;
    cfg.cw = {10, 500, 0.01, 10.0, 0.0};
  } else {
    cfg.epsilon = 0.02;
    cfg.iterations = 10;
    cfg.cw = {5, 250, 0.003, 10.0, 0.0};
  }
  return cfg;
}

SuiteSetting attack_setting(const std::string& name, AttackKind kind, bool targeted) {
  SuiteSetting s;
  s.kind = SuiteSetting::Kind::kAttack;
  s.name = name;
  s.attack = paper_attack(kind, targeted);
  return s;
}

SuiteSetting corruption_setting(SuiteSetting::Kind kind, const std::string& name, double amount) {
  SuiteSetting s;
  s.kind = kind;
  s.name = name;
  s.amount = amount;
  return s;
}

std::string echo_of(const SuiteSetting& s) {
  char buf[256];
  switch (s.kind) {
    case SuiteSetting::Kind::kClean:
      return "clean";
    case SuiteSetting::Kind::kAttack: {
      const auto& a = s.attack;
      if (a.kind == AttackKind::kCw) {
        std::snprintf(buf, sizeof(buf),
                      "kind=cw targeted=%d binary_steps=%d iterations=%d lr=%g initial_c=%g "
                      "kappa=%g",
                      a.targeted ? 1 : 0, a.cw.binary_steps, a.cw.iterations, a.cw.lr,
                      a.cw.initial_c, a.cw.kappa);
      } else {
        std::snprintf(buf, sizeof(buf),
                      "kind=%s targeted=%d epsilon=%g iterations=%d step_size=%s mu=%g",
                      attack_kind_name(a.kind), a.targeted ? 1 : 0, a.epsilon, a.iterations,
                      a.step_size > 0 ? std::to_string(a.step_size).c_str() : "derived",
                      a.momentum_mu);
      }
      return buf;
    }
    case SuiteSetting::Kind::kGaussian:
      std::snprintf(buf, sizeof(buf), "gaussian std_frac=%g", s.amount);
      return buf;
    case SuiteSetting::Kind::kDrop:
      std::snprintf(buf, sizeof(buf), "drop ratio=%g repad=false", s.amount);
      return buf;
  }
  return "?";
}

/// Deterministic per-input seed, independent of threading.
std::uint64_t input_seed(std::uint64_t suite_seed, std::size_t row, std::size_t input) {
  return derive_seed(suite_seed, (static_cast<std::uint64_t>(row) << 32) ^
                                     static_cast<std::uint64_t>(input));
}

void parallel_over(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(threads, static_cast<int>(count));
  pool.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

std::vector<SuiteSetting> preset_suite(const std::string& name) {
  std::vector<SuiteSetting> out;
  if (name == "paper-targeted") {
    out.push_back(attack_setting("fgm-t", AttackKind::kFgm, true));
    out.push_back(attack_setting("ifgm-t", AttackKind::kIfgm, true));
    out.push_back(attack_setting("mifgm-t", AttackKind::kMifgm, true));
    out.push_back(attack_setting("pgd-t", AttackKind::kPgd, true));
    out.push_back(attack_setting("cw-t", AttackKind::kCw, true));
    return out;
  }
  if (name == "paper-untargeted") {
    out.push_back(attack_setting("fgm-u", AttackKind::kFgm, false));
    out.push_back(attack_setting("ifgm-u", AttackKind::kIfgm, false));
    out.push_back(attack_setting("mifgm-u", AttackKind::kMifgm, false));
    out.push_back(attack_setting("pgd-u", AttackKind::kPgd, false));
    out.push_back(attack_setting("cw-u", AttackKind::kCw, false));
    return out;
  }
  if (name == "corruptions") {
    out.push_back(corruption_setting(SuiteSetting::Kind::kGaussian, "gauss-4", 0.04));
    out.push_back(corruption_setting(SuiteSetting::Kind::kGaussian, "gauss-8", 0.08));
    out.push_back(corruption_setting(SuiteSetting::Kind::kDrop, "drop-70", 0.70));
    out.push_back(corruption_setting(SuiteSetting::Kind::kDrop, "drop-80", 0.80));
    return out;
  }
  if (name == "toy-untargeted") {
    out.push_back(attack_setting("pgd-u", AttackKind::kPgd, false));
    return out;
  }
  throw Error("unknown eval preset \"" + name + "\"");
}

EvalReport evaluate_suite(ModelBundle& bundle, const Dataset& dataset, const SuiteSpec& spec) {
  auto test_indices = dataset.indices_of(kSplitTest);
  if (test_indices.empty()) throw Error("evaluate_suite: test split is empty");
  if (spec.max_inputs > 0 && static_cast<Index>(test_indices.size()) > spec.max_inputs) {
    test_indices.resize(static_cast<std::size_t>(spec.max_inputs));
  }
  const std::size_t n = test_indices.size();
  const Index num_classes = bundle.dims.num_classes;
  ModelVictim victim(bundle.encoder, bundle.classifier);

  std::vector<int> ground_truth(n);
  std::vector<int> pre_attack(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(test_indices[i]);
    ground_truth[i] = dataset.labels[idx];
  }
  parallel_over(n, spec.threads, [&](std::size_t i) {
    pre_attack[i] = predict(victim, dataset.clouds[static_cast<std::size_t>(test_indices[i])]);
  });
  const double clean_acc = accuracy(pre_attack, ground_truth);

  EvalReport report;
  {
    char id[32];
    std::snprintf(id, sizeof(id), "run-%016llx",
                  static_cast<unsigned long long>(derive_seed(spec.seed, 0xE7A1)));
    report.run_id = id;
  }
  report.config_echo =
      "seed=" + std::to_string(spec.seed) + " n=" + std::to_string(n) +
      " threads=" + std::to_string(spec.threads) + " untargeted_asr=initially-correct-only";

  {
    SuiteRow clean_row;
    clean_row.name = "clean";
    clean_row.config_echo = "clean";
    clean_row.clean_acc = clean_acc;
    clean_row.robust_acc = clean_acc;
    clean_row.asr = 0.0;
    clean_row.n = static_cast<Index>(n);
    clean_row.eligible = static_cast<Index>(n);
    report.rows.push_back(clean_row);
  }

  for (std::size_t row_idx = 0; row_idx < spec.settings.size(); ++row_idx) {
    const SuiteSetting& s = spec.settings[row_idx];
    SuiteRow row;
    row.name = s.name;
    row.config_echo = echo_of(s);
    row.clean_acc = clean_acc;
    row.n = static_cast<Index>(n);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (s.kind == SuiteSetting::Kind::kClean) {
        row.robust_acc = clean_acc;
        row.asr = 0.0;
        row.eligible = static_cast<Index>(n);
      } else {
        std::vector<int> post(n);
        std::vector<int> targets(n, -1);
        const bool targeted = s.kind == SuiteSetting::Kind::kAttack && s.attack.targeted;

        parallel_over(n, spec.threads, [&](std::size_t i) {
          const auto idx = static_cast<std::size_t>(test_indices[i]);
          const Tensor& cloud = dataset.clouds[idx];
          Rng rng(input_seed(spec.seed, row_idx + 1, i));
          switch (s.kind) {
            case SuiteSetting::Kind::kAttack: {
              int label = ground_truth[i];
              if (targeted) {
                const int offset =
                    1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(num_classes - 1)));
                label = (ground_truth[i] + offset) % static_cast<int>(num_classes);
                targets[i] = label;
              }
              const AttackResult res = run_attack(victim, cloud, label, s.attack, rng);
              post[i] = predict(victim, res.cloud);
              break;
            }
            case SuiteSetting::Kind::kGaussian:
              post[i] = predict(victim, gaussian_corrupt(cloud, s.amount, rng.next_u64()));
              break;
            case SuiteSetting::Kind::kDrop:
              post[i] = predict(victim, drop_points(cloud, s.amount, rng.next_u64()));
              break;
            case SuiteSetting::Kind::kClean:
              break;
          }
        });

        row.robust_acc = accuracy(post, ground_truth);
        if (targeted) {
          row.asr = asr(post, ground_truth, targets, true, pre_attack);
          row.eligible = static_cast<Index>(n);
        } else {
          Index eligible = 0;
          for (std::size_t i = 0; i < n; ++i) {
            if (pre_attack[i] == ground_truth[i]) ++eligible;
          }
          row.eligible = eligible;
          row.asr = asr(post, ground_truth, {}, false, pre_attack);
        }
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw Error("write_report_csv: cannot open \"" + path + "\"");
  os << "setting,clean_acc,robust_acc,asr,n,eligible,seconds,ok,config\n";
  for (const auto& r : report.rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld,%lld,%.3f,%d,", r.name.c_str(),
                  r.clean_acc, r.robust_acc, r.asr, static_cast<long long>(r.n),
                  static_cast<long long>(r.eligible), r.seconds, r.ok ? 1 : 0);
    os << buf << '"' << (r.ok ? r.config_echo : r.error) << '"' << "\n";
  }
}

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["format_version"] = report.format_version;
  j["run_id"] = report.run_id;
  j["config"] = report.config_echo;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["setting"] = r.name;
    row["config"] = r.config_echo;
    row["clean_acc"] = r.clean_acc;
    row["robust_acc"] = r.robust_acc;
    row["asr"] = r.asr;
    row["n"] = r.n;
    row["eligible"] = r.eligible;
    row["seconds"] = r.seconds;
    row["ok"] = r.ok;
    if (!r.ok) row["error"] = r.error;
    j["rows"].push_back(row);
  }
  std::ofstream os(path);
  if (!os) throw Error("write_report_json: cannot open \"" + path + "\"");
  os << j.dump(2) << "\n";
}

void export_features(ModelBundle& bundle, const Dataset& dataset, const std::string& which,
                     double epsilon, const std::string& path) {
  if (which != "clean" && which != "corrupted") {
    throw Error("export_features: which must be clean or corrupted, got \"" + which + "\"");
  }
  std::ofstream os(path);
  if (!os) throw Error("export_features: cannot open \"" + path + "\"");

  os << "label";
  for (Index i = 0; i < bundle.dims.feature_dim(); ++i) os << ",f" << i;
  for (Index i = 0; i < bundle.dims.projection_dim; ++i) os << ",p" << i;
  os << "\n";

  char buf[32];
  for (Index idx = 0; idx < dataset.size(); ++idx) {
    Tensor cloud = dataset.clouds[static_cast<std::size_t>(idx)];
    if (which == "corrupted") {
      Tensor batch = cloud.reshaped({1, cloud.dim(0), 3});
      Tensor raw = generate_noise_values(bundle.generator, batch);
      Tensor delta = l2_project(raw.reshaped({cloud.dim(0), 3}), epsilon);
      cloud.array() += delta.array();
    }
    const Tensor feats = encode_values(bundle.encoder, cloud.reshaped({1, cloud.dim(0), 3}));
    const Tensor proj = project_values(bundle.projector, feats);
    os << dataset.labels[static_cast<std::size_t>(idx)];
    for (Index i = 0; i < feats.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", feats[i]);
      os << buf;
    }
    for (Index i = 0; i < proj.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", proj[i]);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace pointcat
