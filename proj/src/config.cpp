#include "pointcat/config.hpp"

#include <fstream>
#include <sstream>

namespace pointcat {

namespace {

struct Parser {
  int line_no = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("config: line " + std::to_string(line_no) + ": " + what);
  }

  double as_double(const std::string& v) const {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(v, &used);
    } catch (...) {
      fail("expected a number, got \"" + v + "\"");
    }
    if (used != v.size()) fail("expected a number, got \"" + v + "\"");
    return d;
  }

  long long as_int(const std::string& v) const {
    std::size_t used = 0;
    long long i = 0;
    try {
      i = std::stoll(v, &used);
    } catch (...) {
      fail("expected an integer, got \"" + v + "\"");
    }
    if (used != v.size()) fail("expected an integer, got \"" + v + "\"");
    return i;
  }

  std::uint64_t as_u64(const std::string& v) const {
    const long long i = as_int(v);
    if (i < 0) fail("expected a non-negative integer, got \"" + v + "\"");
    return static_cast<std::uint64_t>(i);
  }

  bool as_bool(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false, got \"" + v + "\"");
  }

  std::vector<std::string> as_list(const std::string& v) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      out.push_back(item.substr(b, e - b + 1));
    }
    return out;
  }

  std::vector<Index> as_index_list(const std::string& v) const {
    std::vector<Index> out;
    for (const auto& item : as_list(v)) out.push_back(static_cast<Index>(as_int(item)));
    return out;
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void apply_data(DataConfig& c, const std::string& key, const std::string& v, const Parser& p) {
  if (key == "kind") c.kind = v;
  else if (key == "categories") c.categories = p.as_list(v);
  else if (key == "per_category") c.per_category = static_cast<Index>(p.as_int(v));
  else if (key == "points") c.points = static_cast<Index>(p.as_int(v));
  else if (key == "jitter") c.jitter = p.as_double(v);
  else if (key == "train_fraction") c.train_fraction = p.as_double(v);
  else if (key == "seed") c.seed = p.as_u64(v);
  else if (key == "path") c.path = v;
  else p.fail("unknown key \"" + key + "\" in [data]");
}

void apply_model(ModelDims& c, const std::string& key, const std::string& v, const Parser& p) {
  if (key == "encoder_widths") c.encoder_widths = p.as_index_list(v);
  else if (key == "projector_hidden") c.projector_hidden = static_cast<Index>(p.as_int(v));
  else if (key == "projection_dim") c.projection_dim = static_cast<Index>(p.as_int(v));
  else if (key == "cmlp_widths") c.cmlp_widths = p.as_index_list(v);
  else if (key == "decoder_hidden") c.decoder_hidden = static_cast<Index>(p.as_int(v));
  else if (key == "refine_hidden") c.refine_hidden = static_cast<Index>(p.as_int(v));
  else p.fail("unknown key \"" + key + "\" in [model]");
}

void apply_train(TrainConfig& c, const std::string& key, const std::string& v, const Parser& p) {
  if (key == "mode") c.mode = parse_train_mode(v);
  else if (key == "epochs") c.epochs = static_cast<int>(p.as_int(v));
  else if (key == "batch_size") c.batch_size = static_cast<Index>(p.as_int(v));
  else if (key == "lr0") c.lr0 = p.as_double(v);
  else if (key == "t1") c.t1 = static_cast<int>(p.as_int(v));
  else if (key == "eta1") c.eta1 = p.as_double(v);
  else if (key == "t2") c.t2 = static_cast<int>(p.as_int(v));
  else if (key == "alpha") c.alpha = p.as_double(v);
  else if (key == "beta") c.beta = p.as_double(v);
  else if (key == "tau_adv") c.tau_adv = p.as_double(v);
  else if (key == "tau_sup") c.tau_sup = p.as_double(v);
  else if (key == "tau_cen") c.tau_cen = p.as_double(v);
  else if (key == "generator_epsilon") c.generator_epsilon = p.as_double(v);
  else if (key == "seed") c.seed = p.as_u64(v);
  else if (key == "disable_sup") c.disable_sup = p.as_bool(v);
  else if (key == "disable_cen") c.disable_cen = p.as_bool(v);
  else if (key == "disable_generator") c.disable_generator = p.as_bool(v);
  else if (key == "disable_prototypes") c.disable_prototypes = p.as_bool(v);
  else if (key == "clip_norm") c.clip_norm = p.as_double(v);
  else p.fail("unknown key \"" + key + "\" in [train]");
}

void apply_attack(AttackConfig& c, const std::string& key, const std::string& v, const Parser& p) {
  if (key == "kind") c.kind = parse_attack_kind(v);
  else if (key == "targeted") c.targeted = p.as_bool(v);
  else if (key == "epsilon") c.epsilon = p.as_double(v);
  else if (key == "iterations") c.iterations = static_cast<int>(p.as_int(v));
  else if (key == "step_size") c.step_size = p.as_double(v);
  else if (key == "momentum_mu") c.momentum_mu = p.as_double(v);
  else if (key == "cw_binary_steps") c.cw.binary_steps = static_cast<int>(p.as_int(v));
  else if (key == "cw_iterations") c.cw.iterations = static_cast<int>(p.as_int(v));
  else if (key == "cw_lr") c.cw.lr = p.as_double(v);
  else if (key == "cw_initial_c") c.cw.initial_c = p.as_double(v);
  else if (key == "cw_kappa") c.cw.kappa = p.as_double(v);
  else p.fail("unknown key \"" + key + "\" in [attack]");
}

void apply_corruption(CorruptionConfig& c, const std::string& key, const std::string& v,
                      const Parser& p) {
  if (key == "gaussian_std_frac") c.gaussian_std_frac = p.as_double(v);
  else if (key == "drop_ratio") c.drop_ratio = p.as_double(v);
  else if (key == "seed") c.seed = p.as_u64(v);
  else p.fail("unknown key \"" + key + "\" in [corruption]");
}

void apply_eval(EvalConfig& c, const std::string& key, const std::string& v, const Parser& p) {
  if (key == "presets") c.presets = p.as_list(v);
  else if (key == "threads") c.threads = static_cast<int>(p.as_int(v));
  else if (key == "max_inputs") c.max_inputs = static_cast<Index>(p.as_int(v));
  else if (key == "seed") c.seed = p.as_u64(v);
  else p.fail("unknown key \"" + key + "\" in [eval]");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  Parser p;
  std::istringstream is(text);
  std::string line;
  std::string section;
  while (std::getline(is, line)) {
    ++p.line_no;
    // strip comments
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') p.fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "model" && section != "train" &&
          section != "attack" && section != "corruption" && section != "eval") {
        p.fail("unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (section.empty()) p.fail("key \"" + key + "\" outside any section");

    if (section == "data") apply_data(cfg.data, key, value, p);
    else if (section == "model") apply_model(cfg.model, key, value, p);
    else if (section == "train") apply_train(cfg.train, key, value, p);
    else if (section == "attack") apply_attack(cfg.attack, key, value, p);
    else if (section == "corruption") apply_corruption(cfg.corruption, key, value, p);
    else apply_eval(cfg.eval, key, value, p);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string example_config_text() {
  return R"([data]
kind = synthetic
categories = sphere, cube, cylinder, cone
per_category = 125
points = 256
jitter = 0.005
train_fraction = 0.8
seed = 7
path = dataset.pcds

[model]
encoder_widths = 16, 32, 64, 128
projector_hidden = 128
projection_dim = 32
cmlp_widths = 8, 16, 32, 64
decoder_hidden = 128
refine_hidden = 16

[train]
mode = pointcat
epochs = 30
batch_size = 20
lr0 = 0.001
t1 = 2
eta1 = 0.005
t2 = 4
alpha = 8
beta = 0.5
tau_adv = 0.1
tau_sup = 0.1
tau_cen = 0.25
generator_epsilon = 0.04
seed = 0
disable_sup = false
disable_cen = false
disable_generator = false
disable_prototypes = false
clip_norm = 10

[attack]
kind = pgd
targeted = false
epsilon = 0.02
iterations = 10
step_size = 0
momentum_mu = 1.0
cw_binary_steps = 5
cw_iterations = 250
cw_lr = 0.003
cw_initial_c = 10
cw_kappa = 0

[corruption]
gaussian_std_frac = 0.04
drop_ratio = 0.7
seed = 1

[eval]
presets = toy-untargeted, corruptions
threads = 1
max_inputs = 0
seed = 1
)";
}

Dataset dataset_from_config(const DataConfig& cfg) {
  if (cfg.kind == "synthetic") {
    SyntheticSpec spec;
    spec.categories = cfg.categories;
    spec.per_category = cfg.per_category;
    spec.points = cfg.points;
    spec.jitter = cfg.jitter;
    spec.train_fraction = cfg.train_fraction;
    return gen_synthetic(spec, cfg.seed);
  }
  if (cfg.kind == "pcds") {
    if (cfg.path.empty()) throw Error("config: [data] kind=pcds needs path");
    return load_dataset(cfg.path);
  }
  throw Error("config: unknown data kind \"" + cfg.kind + "\"");
}

}  // namespace pointcat
