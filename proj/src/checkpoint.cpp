#include "pointcat/checkpoint.hpp"

#include <fstream>

#include "pointcat/binio.hpp"

namespace pointcat {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'A', 'T'};

bool is_running_stat(const std::string& name) {
  return name.ends_with("bn_rmean") || name.ends_with("bn_rvar");
}

}  // namespace

void Checkpoint::add(std::string name, Tensor value) {
  if (has(name)) throw Error("checkpoint: duplicate entry \"" + name + "\"");
  entries.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw Error("checkpoint: missing entry \"" + name + "\"");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_checkpoint: cannot open \"" + path + "\"");
  os.write(kMagic, 4);
  binio::write_raw<std::uint32_t>(os, ckpt.version);
  for (const auto& [name, value] : ckpt.entries) {
    binio::write_string(os, name);
    binio::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(value.rank()));
    for (Index d : value.shape()) binio::write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    binio::write_f64_block(os, value.data(), value.size());
  }
  if (!os) throw Error("save_checkpoint: write failed for \"" + path + "\"");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_checkpoint: cannot open \"" + path + "\"");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("load_checkpoint: \"" + path + "\" is not a PCAT checkpoint (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.version = binio::read_raw<std::uint32_t>(is, "version");
  if (ckpt.version != kCheckpointVersion) {
    throw Error("load_checkpoint: unsupported format version " + std::to_string(ckpt.version));
  }
  while (is.peek() != std::char_traits<char>::eof()) {
    std::string name = binio::read_string(is, "entry name");
    const auto rank = binio::read_raw<std::uint32_t>(is, name.c_str());
    std::vector<Index> shape(rank);
    for (auto& d : shape) {
      d = static_cast<Index>(binio::read_raw<std::uint64_t>(is, name.c_str()));
    }
    Tensor t = Tensor::zeros(shape);
    binio::read_f64_block(is, t.data(), t.size(), name.c_str());
    ckpt.entries.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Tensor encode_u64(std::uint64_t v) {
  return Tensor::from_values({2}, {static_cast<double>(v & 0xFFFFFFFFULL),
                                   static_cast<double>(v >> 32)});
}

std::uint64_t decode_u64(const Tensor& t) {
  if (t.size() != 2) throw Error("decode_u64: expected 2 values, got " + t.shape_str());
  return static_cast<std::uint64_t>(t[0]) | (static_cast<std::uint64_t>(t[1]) << 32);
}

ModelBundle make_bundle(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  ModelBundle b;
  b.dims = dims;
  Rng enc_rng(derive_seed(seed, 1));
  Rng proj_rng(derive_seed(seed, 2));
  Rng cls_rng(derive_seed(seed, 3));
  Rng gen_rng(derive_seed(seed, 4));
  b.encoder = make_encoder(dims, enc_rng);
  b.projector = make_projector(dims, proj_rng);
  b.classifier = make_classifier(dims, cls_rng);
  b.generator = make_generator(dims, gen_rng);
  b.bank = init_bank(dims.num_classes, dims.points, derive_seed(seed, 5), b.encoder, b.projector);
  return b;
}

void bundle_into_checkpoint(const ModelBundle& bundle, Checkpoint& ckpt) {
  for (const ParamSet* ps :
       {&bundle.encoder, &bundle.projector, &bundle.classifier, &bundle.generator}) {
    for (const auto& entry : ps->entries()) ckpt.add(entry.name, entry.value);
  }
  ckpt.add("proto/psi", bundle.bank.psi);
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  ModelBundle b;
  for (const auto& [name, value] : ckpt.entries) {
    if (name.starts_with("enc/")) {
      b.encoder.add(name, value, !is_running_stat(name));
    } else if (name.starts_with("proj/")) {
      b.projector.add(name, value, !is_running_stat(name));
    } else if (name.starts_with("cls/")) {
      b.classifier.add(name, value, !is_running_stat(name));
    } else if (name.starts_with("gen/")) {
      b.generator.add(name, value, !is_running_stat(name));
    }
  }

  ModelDims& d = b.dims;
  d.encoder_widths.clear();
  for (Index l = 0; b.encoder.has("enc/l" + std::to_string(l) + "/W"); ++l) {
    d.encoder_widths.push_back(b.encoder.at("enc/l" + std::to_string(l) + "/W").dim(1));
  }
  d.cmlp_widths.clear();
  for (Index l = 0; b.generator.has("gen/cmlp" + std::to_string(l) + "/W"); ++l) {
    d.cmlp_widths.push_back(b.generator.at("gen/cmlp" + std::to_string(l) + "/W").dim(1));
  }
  if (d.encoder_widths.empty() || d.cmlp_widths.empty() || !b.projector.has("proj/l0/W") ||
      !b.projector.has("proj/l1/W") || !b.classifier.has("cls/l0/W") ||
      !b.generator.has("gen/fc1/W") || !ckpt.has("proto/psi")) {
    throw Error("checkpoint: incomplete model (missing network parameters)");
  }
  d.projector_hidden = b.projector.at("proj/l0/W").dim(1);
  d.projection_dim = b.projector.at("proj/l1/W").dim(1);
  d.num_classes = b.classifier.at("cls/l0/W").dim(1);
  d.decoder_hidden = b.generator.at("gen/fc0/W").dim(1);
  d.refine_hidden = b.generator.at("gen/refine0/W").dim(1);
  d.points = b.generator.at("gen/fc1/W").dim(1) / 3;
  d.validate();

  b.bank.psi = ckpt.at("proto/psi");
  if (b.bank.psi.rank() != 3 || b.bank.psi.dim(0) != d.num_classes) {
    throw Error("checkpoint: proto/psi shape " + b.bank.psi.shape_str() +
                " does not match the classifier");
  }
  refresh_caches(b.bank, b.encoder, b.projector);
  return b;
}

}  // namespace pointcat
