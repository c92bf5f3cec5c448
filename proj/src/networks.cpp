#include "pointcat/networks.hpp"

#include <cmath>

#include "pointcat/ops.hpp"

namespace pointcat {

Index ModelDims::cmlp_latent() const {
  Index total = 0;
  for (std::size_t i = 1; i < cmlp_widths.size(); ++i) total += cmlp_widths[i];
  return total;
}

void ModelDims::validate() const {
  if (encoder_widths.size() < 2) throw Error("model dims: encoder needs at least 2 layers");
  if (cmlp_widths.size() < 2) throw Error("model dims: cmlp needs at least 2 layers");
  for (Index w : encoder_widths) {
    if (w < 1) throw Error("model dims: non-positive encoder width");
  }
  if (projection_dim < 1 || projector_hidden < 1 || decoder_hidden < 1 || refine_hidden < 1) {
    throw Error("model dims: non-positive width");
  }
  if (num_classes < 2) throw Error("model dims: needs at least 2 categories");
  if (points < 8) throw Error("model dims: needs at least 8 points");
}

namespace {

Tensor kaiming_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

void add_linear(ParamSet& p, const std::string& prefix, Index in, Index out, Rng& rng) {
  p.add(prefix + "/W", kaiming_uniform(in, out, rng));
  p.add(prefix + "/b", Tensor::zeros({out}));
}

void add_lbr(ParamSet& p, const std::string& prefix, Index in, Index out, Rng& rng) {
  add_linear(p, prefix, in, out, rng);
  p.add(prefix + "/bn_gamma", Tensor::full({out}, 1.0));
  p.add(prefix + "/bn_beta", Tensor::zeros({out}));
  p.add(prefix + "/bn_rmean", Tensor::zeros({out}), /*trainable=*/false);
  p.add(prefix + "/bn_rvar", Tensor::full({out}, 1.0), /*trainable=*/false);
}

NodeId linear(Graph& g, const BoundParams& bound, const std::string& prefix, NodeId x) {
  return ops::add(g, ops::matmul(g, x, bound.at(prefix + "/W")), bound.at(prefix + "/b"));
}

/// Linear + batch-norm + relu. Training mode refreshes the running stats.
NodeId lbr(Graph& g, ParamSet& params, const BoundParams& bound, const std::string& prefix,
           NodeId x, Mode mode) {
  NodeId y = linear(g, bound, prefix, x);
  NodeId bn;
  if (mode == Mode::kTrain) {
    bn = ops::batch_norm_train(g, y, bound.at(prefix + "/bn_gamma"), bound.at(prefix + "/bn_beta"),
                               kBnEps);
    Tensor mean = ops::bn_batch_mean(g, bn);
    Tensor var = ops::bn_batch_var(g, bn);
    auto rm = params.at(prefix + "/bn_rmean").array();
    auto rv = params.at(prefix + "/bn_rvar").array();
    rm = (1.0 - kBnMomentum) * rm + kBnMomentum * mean.array();
    rv = (1.0 - kBnMomentum) * rv + kBnMomentum * var.array();
  } else {
    bn = ops::batch_norm_eval(g, y, bound.at(prefix + "/bn_gamma"), bound.at(prefix + "/bn_beta"),
                              bound.at(prefix + "/bn_rmean"), bound.at(prefix + "/bn_rvar"),
                              kBnEps);
  }
  return ops::relu(g, bn);
}

void check_batch(const Tensor& batch, const char* who) {
  if (batch.rank() != 3 || batch.dim(2) != 3) {
    throw Error(std::string(who) + ": expects a (N,K,3) batch, got " + batch.shape_str());
  }
  if (batch.dim(1) < 8) {
    throw Error(std::string(who) + ": needs at least 8 points per cloud, got " +
                batch.shape_str());
  }
}

}  // namespace

ParamSet make_encoder(const ModelDims& dims, Rng& rng) {
  dims.validate();
  ParamSet p;
  Index in = 3;
  for (std::size_t i = 0; i < dims.encoder_widths.size(); ++i) {
    add_lbr(p, "enc/l" + std::to_string(i), in, dims.encoder_widths[i], rng);
    in = dims.encoder_widths[i];
  }
  return p;
}

ParamSet make_projector(const ModelDims& dims, Rng& rng) {
  dims.validate();
  ParamSet p;
  add_lbr(p, "proj/l0", dims.feature_dim(), dims.projector_hidden, rng);
  add_linear(p, "proj/l1", dims.projector_hidden, dims.projection_dim, rng);
  return p;
}

ParamSet make_classifier(const ModelDims& dims, Rng& rng) {
  dims.validate();
  ParamSet p;
  add_linear(p, "cls/l0", dims.feature_dim(), dims.num_classes, rng);
  return p;
}

ParamSet make_generator(const ModelDims& dims, Rng& rng) {
  dims.validate();
  ParamSet p;
  Index in = 3;
  for (std::size_t i = 0; i < dims.cmlp_widths.size(); ++i) {
    add_lbr(p, "gen/cmlp" + std::to_string(i), in, dims.cmlp_widths[i], rng);
    in = dims.cmlp_widths[i];
  }
  add_lbr(p, "gen/fc0", dims.cmlp_latent(), dims.decoder_hidden, rng);
  add_lbr(p, "gen/fc1", dims.decoder_hidden, dims.points * 3, rng);
  add_lbr(p, "gen/refine0", 3, dims.refine_hidden, rng);
  add_linear(p, "gen/refine1", dims.refine_hidden, 3, rng);
  p.at("gen/refine1/W").array() *= 0.1;
  return p;
}

ForwardResult encode(Graph& g, ParamSet& params, NodeId batch, Mode mode) {
  const Tensor& in = g.value(batch);
  check_batch(in, "encode");
  const Index n = in.dim(0), k = in.dim(1);
  BoundParams bound = bind_params(g, params);

  NodeId x = ops::reshape(g, batch, {n * k, 3});
  Index layer = 0;
  Index width = 3;
  while (params.has("enc/l" + std::to_string(layer) + "/W")) {
    const std::string prefix = "enc/l" + std::to_string(layer);
    x = lbr(g, params, bound, prefix, x, mode);
    width = g.value(x).dim(1);
    ++layer;
  }
  x = ops::reshape(g, x, {n, k, width});
  x = ops::max_pool_points(g, x);
  return {x, std::move(bound)};
}

ForwardResult project(Graph& g, ParamSet& params, NodeId features, Mode mode) {
  BoundParams bound = bind_params(g, params);
  NodeId x = lbr(g, params, bound, "proj/l0", features, mode);
  x = linear(g, bound, "proj/l1", x);
  x = ops::row_l2_normalize(g, x);
  return {x, std::move(bound)};
}

ForwardResult classify(Graph& g, ParamSet& params, NodeId features) {
  BoundParams bound = bind_params(g, params);
  NodeId x = linear(g, bound, "cls/l0", features);
  return {x, std::move(bound)};
}

ForwardResult generate_noise(Graph& g, ParamSet& params, NodeId batch, Mode mode) {
  const Tensor& in = g.value(batch);
  check_batch(in, "generate_noise");
  const Index n = in.dim(0), k = in.dim(1);
  const Index decoder_out = params.at("gen/fc1/W").dim(1);
  if (decoder_out != k * 3) {
    throw Error("generate_noise: decoder emits " + std::to_string(decoder_out) +
                " values per cloud but batch " + in.shape_str() + " needs " +
                std::to_string(k * 3));
  }
  BoundParams bound = bind_params(g, params);

  NodeId x = ops::reshape(g, batch, {n * k, 3});
  std::vector<NodeId> pooled;
  Index level = 0;
  while (params.has("gen/cmlp" + std::to_string(level) + "/W")) {
    const std::string prefix = "gen/cmlp" + std::to_string(level);
    x = lbr(g, params, bound, prefix, x, mode);
    if (level > 0) {
      const Index width = g.value(x).dim(1);
      pooled.push_back(ops::max_pool_points(g, ops::reshape(g, x, {n, k, width})));
    }
    ++level;
  }
  NodeId latent = ops::concat_last_dim(g, std::move(pooled));

  NodeId d = lbr(g, params, bound, "gen/fc0", latent, mode);
  d = lbr(g, params, bound, "gen/fc1", d, mode);
  d = ops::reshape(g, d, {n * k, 3});
  d = lbr(g, params, bound, "gen/refine0", d, mode);
  d = linear(g, bound, "gen/refine1", d);
  d = ops::reshape(g, d, {n, k, 3});
  return {d, std::move(bound)};
}

Tensor encode_values(ParamSet& params, const Tensor& batch) {
  Graph g;
  return g.value(encode(g, params, g.leaf(batch), Mode::kEval).out);
}

Tensor project_values(ParamSet& params, const Tensor& features) {
  Graph g;
  return g.value(project(g, params, g.leaf(features), Mode::kEval).out);
}

Tensor classify_values(ParamSet& params, const Tensor& features) {
  Graph g;
  return g.value(classify(g, params, g.leaf(features)).out);
}

Tensor generate_noise_values(ParamSet& params, const Tensor& batch) {
  Graph g;
  return g.value(generate_noise(g, params, g.leaf(batch), Mode::kEval).out);
}

Tensor stack_clouds(const std::vector<Tensor>& clouds) {
  if (clouds.empty()) throw Error("stack_clouds: empty batch");
  const Index k = clouds[0].dim(0);
  for (const Tensor& c : clouds) {
    if (c.rank() != 2 || c.dim(1) != 3) {
      throw Error("stack_clouds: expects (K,3) clouds, got " + c.shape_str());
    }
    if (c.dim(0) != k) {
      throw Error("stack_clouds: clouds must share K within a batch, got " + std::to_string(k) +
                  " and " + std::to_string(c.dim(0)));
    }
  }
  Tensor batch = Tensor::zeros({static_cast<Index>(clouds.size()), k, 3});
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    batch.matrix(static_cast<Index>(clouds.size()), k * 3).row(static_cast<Index>(i)) =
        clouds[i].matrix(1, k * 3).row(0);
  }
  return batch;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  auto m = logits.matrix();
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace pointcat
