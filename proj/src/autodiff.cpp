#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "pointcat/ops.hpp"

namespace pointcat {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kMultiply: return "multiply";
    case OpKind::kSubtract: return "subtract";
    case OpKind::kScalarScale: return "scalar-scale";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exponential";
    case OpKind::kLog: return "natural-log";
    case OpKind::kSoftmaxLastDim: return "softmax-over-last-dim";
    case OpKind::kMaxPoolPoints: return "max-pool-over-point-dim";
    case OpKind::kBatchNorm: return "batch-normalization";
    case OpKind::kConcatLastDim: return "concatenate";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kL2Norm: return "l2-norm";
    case OpKind::kCosineSimilarity: return "cosine-similarity";
    case OpKind::kGatherRows: return "gather-rows";
    case OpKind::kRowL2Normalize: return "row-l2-normalize";
    case OpKind::kRowDot: return "row-dot";
    case OpKind::kRowLogSumExpMasked: return "row-logsumexp-masked";
    case OpKind::kRowL2Clip: return "row-l2-clip";
    case OpKind::kLogitMargin: return "logit-margin";
  }
  return "?";
}

const Tensor& GradientMap::at(NodeId id) const {
  const auto& slot = grads_[static_cast<std::size_t>(id)];
  if (!slot) throw Error("gradient map: no gradient for node " + std::to_string(id));
  return *slot;
}

void GradientMap::accumulate(NodeId id, const Tensor& g) {
  auto& slot = grads_[static_cast<std::size_t>(id)];
  if (!slot) {
    slot = g;
  } else {
    slot->array() += g.array();
  }
}

Tensor& GradientMap::slot(NodeId id, const Tensor& like) {
  auto& s = grads_[static_cast<std::size_t>(id)];
  if (!s) s = Tensor::zeros(like.shape());
  return *s;
}

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw Error(std::string(op_name(kind)) + ": " + detail);
}

void require(bool ok, OpKind kind, const std::string& detail) {
  if (!ok) shape_error(kind, detail);
}

}  // namespace

NodeId Graph::leaf(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.out = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Graph::apply(Node node) {
  for (NodeId in : node.inputs) {
    if (in < 0 || in >= num_nodes()) {
      throw Error(std::string(op_name(node.kind)) + ": input node id " + std::to_string(in) +
                  " out of range");
    }
  }
  if (!node.out.all_finite()) {
    throw Error(std::string(op_name(node.kind)) + ": non-finite value in output of node " +
                std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

namespace ops {

namespace {

const Tensor& val(Graph& g, NodeId id) { return g.value(id); }

}  // namespace

NodeId matmul(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  require(ta.rank() == 2 && tb.rank() == 2, OpKind::kMatmul,
          "expects rank-2 inputs, got " + ta.shape_str() + " and " + tb.shape_str());
  require(ta.dim(1) == tb.dim(0), OpKind::kMatmul,
          "incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  Node n;
  n.kind = OpKind::kMatmul;
  n.inputs = {a, b};
  n.out = Tensor::zeros({ta.dim(0), tb.dim(1)});
  n.out.matrix().noalias() = ta.matrix() * tb.matrix();
  return g.apply(std::move(n));
}

NodeId transpose(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  require(ta.rank() == 2, OpKind::kTranspose, "expects rank-2 input, got " + ta.shape_str());
  Node n;
  n.kind = OpKind::kTranspose;
  n.inputs = {a};
  n.out = Tensor::zeros({ta.dim(1), ta.dim(0)});
  n.out.matrix() = ta.matrix().transpose();
  return g.apply(std::move(n));
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  if (ta.same_shape(tb)) {
    n.out = Tensor::zeros(ta.shape());
    n.out.array() = ta.array() + tb.array();
  } else if (tb.rank() == 1 && tb.dim(0) == ta.last_dim()) {
    n.flag = true;  // broadcast bias over folded rows
    n.out = Tensor::zeros(ta.shape());
    n.out.matrix() = ta.matrix().rowwise() + tb.matrix().row(0);
  } else {
    shape_error(OpKind::kAdd, "incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  }
  return g.apply(std::move(n));
}

NodeId multiply(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  require(ta.same_shape(tb), OpKind::kMultiply,
          "incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  Node n;
  n.kind = OpKind::kMultiply;
  n.inputs = {a, b};
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array() * tb.array();
  return g.apply(std::move(n));
}

NodeId subtract(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  require(ta.same_shape(tb), OpKind::kSubtract,
          "incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  Node n;
  n.kind = OpKind::kSubtract;
  n.inputs = {a, b};
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array() - tb.array();
  return g.apply(std::move(n));
}

NodeId scalar_scale(Graph& g, NodeId a, double factor) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kScalarScale;
  n.inputs = {a};
  n.scalar = factor;
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array() * factor;
  return g.apply(std::move(n));
}

NodeId relu(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {a};
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array().max(0.0);
  return g.apply(std::move(n));
}

NodeId exponential(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kExp;
  n.inputs = {a};
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array().exp();
  return g.apply(std::move(n));
}

NodeId natural_log(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kLog;
  n.inputs = {a};
  n.out = Tensor::zeros(ta.shape());
  n.out.array() = ta.array().log();
  return g.apply(std::move(n));
}

NodeId softmax_last_dim(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  require(ta.last_dim() >= 1, OpKind::kSoftmaxLastDim, "empty last dim in " + ta.shape_str());
  Node n;
  n.kind = OpKind::kSoftmaxLastDim;
  n.inputs = {a};
  n.out = Tensor::zeros(ta.shape());
  auto in = ta.matrix();
  auto out = n.out.matrix();
  for (Index r = 0; r < in.rows(); ++r) {
    const double m = in.row(r).maxCoeff();
    out.row(r) = (in.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return g.apply(std::move(n));
}

NodeId max_pool_points(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  require(ta.rank() == 3, OpKind::kMaxPoolPoints, "expects (N,K,D) input, got " + ta.shape_str());
  const Index nb = ta.dim(0), k = ta.dim(1), d = ta.dim(2);
  require(k >= 1, OpKind::kMaxPoolPoints, "empty point dim in " + ta.shape_str());
  Node n;
  n.kind = OpKind::kMaxPoolPoints;
  n.inputs = {a};
  n.out = Tensor::zeros({nb, d});
  n.ints.assign(static_cast<std::size_t>(nb * d), 0);
  auto in = ta.matrix(nb * k, d);
  auto out = n.out.matrix();
  for (Index b = 0; b < nb; ++b) {
    out.row(b) = in.row(b * k);
    for (Index p = 1; p < k; ++p) {
      const auto row = in.row(b * k + p);
      for (Index c = 0; c < d; ++c) {
        if (row[c] > out(b, c)) {
          out(b, c) = row[c];
          n.ints[static_cast<std::size_t>(b * d + c)] = p;
        }
      }
    }
  }
  return g.apply(std::move(n));
}

namespace {

NodeId batch_norm_impl(Graph& g, NodeId x, NodeId gamma, NodeId beta, NodeId run_mean,
                       NodeId run_var, bool train, double eps) {
  const Tensor& tx = g.value(x);
  const Tensor& tg = g.value(gamma);
  const Tensor& tb = g.value(beta);
  const Index c = tx.last_dim();
  const Index r = tx.folded_rows();
  require(tg.rank() == 1 && tg.dim(0) == c && tb.rank() == 1 && tb.dim(0) == c, OpKind::kBatchNorm,
          "affine shapes " + tg.shape_str() + "/" + tb.shape_str() + " do not match features of " +
              tx.shape_str());
  require(!train || r >= 2, OpKind::kBatchNorm,
          "training mode needs at least 2 rows, got " + tx.shape_str());

  Node n;
  n.kind = OpKind::kBatchNorm;
  n.flag = train;
  n.scalar = eps;
  n.out = Tensor::zeros(tx.shape());

  Eigen::RowVectorXd mean(c), var(c);
  if (train) {
    n.inputs = {x, gamma, beta};
    auto xm = tx.matrix();
    mean = xm.colwise().mean();
    var = (xm.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(r);
  } else {
    const Tensor& trm = g.value(run_mean);
    const Tensor& trv = g.value(run_var);
    require(trm.rank() == 1 && trm.dim(0) == c && trv.rank() == 1 && trv.dim(0) == c,
            OpKind::kBatchNorm,
            "running stats " + trm.shape_str() + "/" + trv.shape_str() + " do not match " +
                tx.shape_str());
    n.inputs = {x, gamma, beta, run_mean, run_var};
    mean = trm.matrix().row(0);
    var = trv.matrix().row(0);
  }

  Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  n.cache_a = Tensor::zeros(tx.shape());  // normalized values
  n.cache_b = Tensor::zeros({c});         // inverse std
  n.cache_b.matrix().row(0) = inv_std;
  n.cache_c = Tensor::zeros({2, c});      // stats used for normalization
  n.cache_c.matrix().row(0) = mean;
  n.cache_c.matrix().row(1) = var;

  auto xhat = n.cache_a.matrix();
  xhat = (tx.matrix().rowwise() - mean).array().rowwise() * inv_std.array();
  n.out.matrix() = (xhat.array().rowwise() * tg.matrix().row(0).array()).rowwise() +
                   tb.matrix().row(0).array();
  return g.apply(std::move(n));
}

}  // namespace

NodeId batch_norm_train(Graph& g, NodeId x, NodeId gamma, NodeId beta, double eps) {
  return batch_norm_impl(g, x, gamma, beta, -1, -1, true, eps);
}

NodeId batch_norm_eval(Graph& g, NodeId x, NodeId gamma, NodeId beta, NodeId run_mean,
                       NodeId run_var, double eps) {
  return batch_norm_impl(g, x, gamma, beta, run_mean, run_var, false, eps);
}

Tensor bn_batch_mean(const Graph& g, NodeId bn) {
  const Node& n = g.node(bn);
  if (n.kind != OpKind::kBatchNorm || !n.flag) throw Error("bn_batch_mean: not a training bn node");
  Tensor row = Tensor::zeros({n.cache_c.dim(1)});
  row.matrix().row(0) = n.cache_c.matrix().row(0);
  return row;
}

Tensor bn_batch_var(const Graph& g, NodeId bn) {
  const Node& n = g.node(bn);
  if (n.kind != OpKind::kBatchNorm || !n.flag) throw Error("bn_batch_var: not a training bn node");
  Tensor row = Tensor::zeros({n.cache_c.dim(1)});
  row.matrix().row(0) = n.cache_c.matrix().row(1);
  return row;
}

NodeId concat_last_dim(Graph& g, std::vector<NodeId> parts) {
  require(!parts.empty(), OpKind::kConcatLastDim, "no inputs");
  require(val(g, parts[0]).rank() >= 1, OpKind::kConcatLastDim,
          "expects rank >= 1, got " + val(g, parts[0]).shape_str());
  const Index rows = val(g, parts[0]).folded_rows();
  Index total = 0;
  std::vector<Index> lead = val(g, parts[0]).shape();
  for (NodeId p : parts) {
    const Tensor& tp = val(g, p);
    require(tp.folded_rows() == rows, OpKind::kConcatLastDim,
            "leading dims differ: " + tp.shape_str() + " vs " + val(g, parts[0]).shape_str());
    total += tp.last_dim();
  }
  lead.back() = total;
  Node n;
  n.kind = OpKind::kConcatLastDim;
  n.inputs = std::move(parts);
  n.out = Tensor::zeros(lead);
  auto out = n.out.matrix(rows, total);
  Index col = 0;
  for (NodeId p : n.inputs) {
    const Tensor& tp = val(g, p);
    out.middleCols(col, tp.last_dim()) = tp.matrix();
    col += tp.last_dim();
  }
  return g.apply(std::move(n));
}

NodeId reshape(Graph& g, NodeId a, std::vector<Index> new_shape) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kReshape;
  n.inputs = {a};
  n.out = ta.reshaped(std::move(new_shape));
  return g.apply(std::move(n));
}

NodeId sum(Graph& g, NodeId a) {
  Node n;
  n.kind = OpKind::kSum;
  n.inputs = {a};
  n.out = Tensor::scalar(val(g, a).array().sum());
  return g.apply(std::move(n));
}

NodeId mean(Graph& g, NodeId a) {
  const Tensor& ta = val(g, a);
  require(ta.size() > 0, OpKind::kMean, "empty input " + ta.shape_str());
  Node n;
  n.kind = OpKind::kMean;
  n.inputs = {a};
  n.out = Tensor::scalar(ta.array().mean());
  return g.apply(std::move(n));
}

NodeId l2_norm(Graph& g, NodeId a) {
  Node n;
  n.kind = OpKind::kL2Norm;
  n.inputs = {a};
  n.out = Tensor::scalar(std::sqrt(val(g, a).array().square().sum()));
  return g.apply(std::move(n));
}

NodeId cosine_similarity(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  require(ta.size() == tb.size(), OpKind::kCosineSimilarity,
          "sizes differ: " + ta.shape_str() + " vs " + tb.shape_str());
  const double na = std::sqrt(ta.array().square().sum());
  const double nb = std::sqrt(tb.array().square().sum());
  const double dot = (ta.array() * tb.array()).sum();
  Node n;
  n.kind = OpKind::kCosineSimilarity;
  n.inputs = {a, b};
  n.out = Tensor::scalar(dot / ((na + 1e-12) * (nb + 1e-12)));
  return g.apply(std::move(n));
}

NodeId gather_rows(Graph& g, NodeId a, std::vector<Index> rows) {
  const Tensor& ta = val(g, a);
  const Index r = ta.folded_rows();
  for (Index idx : rows) {
    require(idx >= 0 && idx < r, OpKind::kGatherRows,
            "row " + std::to_string(idx) + " out of range for " + ta.shape_str());
  }
  Node n;
  n.kind = OpKind::kGatherRows;
  n.inputs = {a};
  n.ints = rows;
  n.out = Tensor::zeros({static_cast<Index>(rows.size()), ta.last_dim()});
  auto in = ta.matrix();
  auto out = n.out.matrix();
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = in.row(rows[i]);
  return g.apply(std::move(n));
}

NodeId row_l2_normalize(Graph& g, NodeId a, double eps) {
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kRowL2Normalize;
  n.inputs = {a};
  n.scalar = eps;
  n.out = Tensor::zeros(ta.shape());
  n.cache_a = Tensor::zeros({ta.folded_rows()});  // row norms
  auto in = ta.matrix();
  auto out = n.out.matrix();
  for (Index r = 0; r < in.rows(); ++r) {
    const double norm = in.row(r).norm();
    n.cache_a[r] = norm;
    out.row(r) = in.row(r) / (norm + eps);
  }
  return g.apply(std::move(n));
}

NodeId row_dot(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = val(g, a);
  const Tensor& tb = val(g, b);
  require(ta.folded_rows() == tb.folded_rows() && ta.last_dim() == tb.last_dim(), OpKind::kRowDot,
          "incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  Node n;
  n.kind = OpKind::kRowDot;
  n.inputs = {a, b};
  n.out = Tensor::zeros({ta.folded_rows()});
  n.out.matrix(ta.folded_rows(), 1).col(0) =
      (ta.matrix().array() * tb.matrix().array()).rowwise().sum().matrix();
  return g.apply(std::move(n));
}

NodeId row_logsumexp_masked(Graph& g, NodeId a, Tensor mask) {
  const Tensor& ta = val(g, a);
  require(mask.same_shape(ta) ||
              (mask.folded_rows() == ta.folded_rows() && mask.last_dim() == ta.last_dim()),
          OpKind::kRowLogSumExpMasked,
          "mask " + mask.shape_str() + " does not match " + ta.shape_str());
  Node n;
  n.kind = OpKind::kRowLogSumExpMasked;
  n.inputs = {a};
  n.aux = std::move(mask);
  const Index rows = ta.folded_rows();
  n.out = Tensor::zeros({rows});
  auto in = ta.matrix();
  auto mk = n.aux.matrix();
  for (Index r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < in.cols(); ++c) {
      if (mk(r, c) != 0.0 && in(r, c) > m) m = in(r, c);
    }
    require(std::isfinite(m), OpKind::kRowLogSumExpMasked,
            "row " + std::to_string(r) + " has an empty mask");
    double s = 0.0;
    for (Index c = 0; c < in.cols(); ++c) {
      if (mk(r, c) != 0.0) s += std::exp(in(r, c) - m);
    }
    n.out[r] = m + std::log(s);
  }
  return g.apply(std::move(n));
}

NodeId row_l2_clip(Graph& g, NodeId a, double radius) {
  require(radius > 0.0, OpKind::kRowL2Clip, "radius must be positive");
  const Tensor& ta = val(g, a);
  Node n;
  n.kind = OpKind::kRowL2Clip;
  n.inputs = {a};
  n.scalar = radius;
  n.out = Tensor::zeros(ta.shape());
  n.cache_a = Tensor::zeros({ta.folded_rows()});  // row norms
  auto in = ta.matrix();
  auto out = n.out.matrix();
  for (Index r = 0; r < in.rows(); ++r) {
    const double norm = in.row(r).norm();
    n.cache_a[r] = norm;
    out.row(r) = norm <= radius ? in.row(r) : (in.row(r) * (radius / norm)).eval();
  }
  return g.apply(std::move(n));
}

NodeId logit_margin(Graph& g, NodeId logits, int y) {
  const Tensor& ta = val(g, logits);
  require(ta.rank() == 1, OpKind::kLogitMargin, "expects rank-1 logits, got " + ta.shape_str());
  const Index m = ta.dim(0);
  require(m >= 2, OpKind::kLogitMargin, "needs at least 2 classes, got " + ta.shape_str());
  require(y >= 0 && y < m, OpKind::kLogitMargin, "label " + std::to_string(y) + " out of range");
  Index best = y == 0 ? 1 : 0;
  for (Index t = 0; t < m; ++t) {
    if (t != y && ta[t] > ta[best]) best = t;
  }
  Node n;
  n.kind = OpKind::kLogitMargin;
  n.inputs = {logits};
  n.label = y;
  n.ints = {best};
  n.out = Tensor::scalar(ta[y] - ta[best]);
  return g.apply(std::move(n));
}

}  // namespace ops

namespace {

// Backward kernels. `gout` is dL/d(node output); each kernel accumulates
// dL/d(input) into the gradient map for inputs flagged in `wants`.
void backward_node(const Graph& g, const Node& n, const Tensor& gout, GradientMap& grads,
                   const std::vector<char>& wants) {
  auto want = [&](std::size_t i) { return wants[static_cast<std::size_t>(n.inputs[i])] != 0; };
  auto in_val = [&](std::size_t i) -> const Tensor& { return g.value(n.inputs[i]); };

  switch (n.kind) {
    case OpKind::kLeaf:
      return;

    case OpKind::kMatmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (want(0)) {
        Tensor& da = grads.slot(n.inputs[0], a);
        da.matrix().noalias() += gout.matrix() * b.matrix().transpose();
      }
      if (want(1)) {
        Tensor& db = grads.slot(n.inputs[1], b);
        db.matrix().noalias() += a.matrix().transpose() * gout.matrix();
      }
      return;
    }

    case OpKind::kTranspose: {
      if (want(0)) {
        Tensor& da = grads.slot(n.inputs[0], in_val(0));
        da.matrix() += gout.matrix().transpose();
      }
      return;
    }

    case OpKind::kAdd: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array();
      if (want(1)) {
        Tensor& db = grads.slot(n.inputs[1], in_val(1));
        if (n.flag) {
          db.matrix().row(0) += gout.matrix().colwise().sum();
        } else {
          db.array() += gout.array();
        }
      }
      return;
    }

    case OpKind::kMultiply: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array() * in_val(1).array();
      if (want(1)) grads.slot(n.inputs[1], in_val(1)).array() += gout.array() * in_val(0).array();
      return;
    }

    case OpKind::kSubtract: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array();
      if (want(1)) grads.slot(n.inputs[1], in_val(1)).array() -= gout.array();
      return;
    }

    case OpKind::kScalarScale: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array() * n.scalar;
      return;
    }

    case OpKind::kRelu: {
      if (want(0)) {
        const Tensor& a = in_val(0);
        grads.slot(n.inputs[0], a).array() +=
            gout.array() * (a.array() > 0.0).cast<double>();
      }
      return;
    }

    case OpKind::kExp: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array() * n.out.array();
      return;
    }

    case OpKind::kLog: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.array() / in_val(0).array();
      return;
    }

    case OpKind::kSoftmaxLastDim: {
      if (want(0)) {
        Tensor& da = grads.slot(n.inputs[0], in_val(0));
        auto p = n.out.matrix();
        auto go = gout.matrix();
        auto dm = da.matrix();
        for (Index r = 0; r < p.rows(); ++r) {
          const double dot = (go.row(r).array() * p.row(r).array()).sum();
          dm.row(r).array() += p.row(r).array() * (go.row(r).array() - dot);
        }
      }
      return;
    }

    case OpKind::kMaxPoolPoints: {
      if (want(0)) {
        const Tensor& a = in_val(0);
        const Index nb = a.dim(0), k = a.dim(1), d = a.dim(2);
        Tensor& da = grads.slot(n.inputs[0], a);
        auto dm = da.matrix(nb * k, d);
        auto go = gout.matrix();
        for (Index b = 0; b < nb; ++b) {
          for (Index c = 0; c < d; ++c) {
            dm(b * k + n.ints[static_cast<std::size_t>(b * d + c)], c) += go(b, c);
          }
        }
      }
      return;
    }

    case OpKind::kBatchNorm: {
      const Tensor& x = in_val(0);
      const Tensor& gamma = in_val(1);
      const Index rows = x.folded_rows();
      auto xhat = n.cache_a.matrix();
      auto inv_std = n.cache_b.matrix().row(0);
      auto go = gout.matrix();
      if (want(1)) {
        grads.slot(n.inputs[1], gamma).matrix().row(0) +=
            (go.array() * xhat.array()).colwise().sum().matrix();
      }
      if (want(2)) {
        grads.slot(n.inputs[2], in_val(2)).matrix().row(0) += go.colwise().sum();
      }
      if (n.flag) {
        if (want(0)) {
          // Train mode: gradient through the batch statistics.
          Eigen::RowVectorXd gsum = go.colwise().sum();
          Eigen::RowVectorXd gx_sum = (go.array() * xhat.array()).colwise().sum().matrix();
          Tensor& dx = grads.slot(n.inputs[0], x);
          auto dxm = dx.matrix();
          const double inv_r = 1.0 / static_cast<double>(rows);
          for (Index r = 0; r < rows; ++r) {
            dxm.row(r).array() +=
                gamma.matrix().row(0).array() * inv_std.array() *
                (go.row(r).array() - inv_r * gsum.array() -
                 inv_r * xhat.row(r).array() * gx_sum.array());
          }
        }
      } else {
        Eigen::RowVectorXd coef = (gamma.matrix().row(0).array() * inv_std.array()).matrix();
        if (want(0)) {
          grads.slot(n.inputs[0], x).matrix().array() += go.array().rowwise() * coef.array();
        }
        if (n.inputs.size() > 3 && want(3)) {
          grads.slot(n.inputs[3], in_val(3)).matrix().row(0).array() -=
              go.colwise().sum().array() * coef.array();
        }
        if (n.inputs.size() > 4 && want(4)) {
          // out = gamma * (x - m) * (var + eps)^-1/2 + beta, so
          // d/dvar = -gamma * xhat * inv_std^2 / 2, summed over rows.
          Eigen::RowVectorXd gxh = (go.array() * xhat.array()).colwise().sum().matrix();
          grads.slot(n.inputs[4], in_val(4)).matrix().row(0).array() +=
              gxh.array() * gamma.matrix().row(0).array() * (-0.5) * inv_std.array().square();
        }
      }
      return;
    }

    case OpKind::kConcatLastDim: {
      auto go = gout.matrix();
      Index col = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& part = in_val(i);
        if (want(i)) {
          grads.slot(n.inputs[i], part).matrix() += go.middleCols(col, part.last_dim());
        }
        col += part.last_dim();
      }
      return;
    }

    case OpKind::kReshape: {
      if (want(0)) {
        grads.slot(n.inputs[0], in_val(0)).array() += gout.array();
      }
      return;
    }

    case OpKind::kSum: {
      if (want(0)) grads.slot(n.inputs[0], in_val(0)).array() += gout.value();
      return;
    }

    case OpKind::kMean: {
      if (want(0)) {
        grads.slot(n.inputs[0], in_val(0)).array() +=
            gout.value() / static_cast<double>(in_val(0).size());
      }
      return;
    }

    case OpKind::kL2Norm: {
      if (want(0)) {
        const double norm = std::max(n.out.value(), 1e-300);
        grads.slot(n.inputs[0], in_val(0)).array() +=
            in_val(0).array() * (gout.value() / norm);
      }
      return;
    }

    case OpKind::kCosineSimilarity: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const double na = std::sqrt(a.array().square().sum());
      const double nb = std::sqrt(b.array().square().sum());
      const double denom = (na + 1e-12) * (nb + 1e-12);
      const double c = n.out.value();
      const double gg = gout.value();
      if (want(0)) {
        auto da = grads.slot(n.inputs[0], a).array();
        da += gg * b.array() / denom;
        if (na > 1e-300) da -= gg * c * a.array() / (na * (na + 1e-12));
      }
      if (want(1)) {
        auto db = grads.slot(n.inputs[1], b).array();
        db += gg * a.array() / denom;
        if (nb > 1e-300) db -= gg * c * b.array() / (nb * (nb + 1e-12));
      }
      return;
    }

    case OpKind::kGatherRows: {
      if (want(0)) {
        Tensor& da = grads.slot(n.inputs[0], in_val(0));
        auto dm = da.matrix();
        auto go = gout.matrix();
        for (std::size_t i = 0; i < n.ints.size(); ++i) {
          dm.row(n.ints[i]) += go.row(static_cast<Index>(i));
        }
      }
      return;
    }

    case OpKind::kRowL2Normalize: {
      if (want(0)) {
        const Tensor& a = in_val(0);
        Tensor& da = grads.slot(n.inputs[0], a);
        auto am = a.matrix();
        auto dm = da.matrix();
        auto go = gout.matrix();
        for (Index r = 0; r < am.rows(); ++r) {
          const double norm = n.cache_a[r];
          const double s = norm + n.scalar;
          dm.row(r) += go.row(r) / s;
          if (norm > 1e-300) {
            const double gdotx = go.row(r).dot(am.row(r));
            dm.row(r) -= am.row(r) * (gdotx / (norm * s * s));
          }
        }
      }
      return;
    }

    case OpKind::kRowDot: {
      const Index rows = in_val(0).folded_rows();
      auto go = gout.matrix(rows, 1);
      if (want(0)) {
        grads.slot(n.inputs[0], in_val(0)).matrix().array() +=
            in_val(1).matrix().array().colwise() * go.col(0).array();
      }
      if (want(1)) {
        grads.slot(n.inputs[1], in_val(1)).matrix().array() +=
            in_val(0).matrix().array().colwise() * go.col(0).array();
      }
      return;
    }

    case OpKind::kRowLogSumExpMasked: {
      if (want(0)) {
        const Tensor& a = in_val(0);
        Tensor& da = grads.slot(n.inputs[0], a);
        auto am = a.matrix();
        auto dm = da.matrix();
        auto mk = n.aux.matrix();
        auto go = gout.matrix(a.folded_rows(), 1);
        for (Index r = 0; r < am.rows(); ++r) {
          for (Index c = 0; c < am.cols(); ++c) {
            if (mk(r, c) != 0.0) dm(r, c) += go(r, 0) * std::exp(am(r, c) - n.out[r]);
          }
        }
      }
      return;
    }

    case OpKind::kRowL2Clip: {
      if (want(0)) {
        const Tensor& a = in_val(0);
        Tensor& da = grads.slot(n.inputs[0], a);
        auto am = a.matrix();
        auto dm = da.matrix();
        auto go = gout.matrix();
        for (Index r = 0; r < am.rows(); ++r) {
          const double norm = n.cache_a[r];
          if (norm <= n.scalar) {
            dm.row(r) += go.row(r);
          } else {
            // y = radius * x / ||x||; dy/dx = radius/||x|| (I - xx^T/||x||^2)
            const double coef = n.scalar / norm;
            const double gdotu = go.row(r).dot(am.row(r)) / (norm * norm);
            dm.row(r) += coef * (go.row(r) - gdotu * am.row(r));
          }
        }
      }
      return;
    }

    case OpKind::kLogitMargin: {
      if (want(0)) {
        Tensor& da = grads.slot(n.inputs[0], in_val(0));
        da[n.label] += gout.value();
        da[n.ints[0]] -= gout.value();
      }
      return;
    }
  }
}

}  // namespace

GradientMap Graph::backward(NodeId root) const {
  return backward(root, {});
}

GradientMap Graph::backward(NodeId root, std::span<const NodeId> watch) const {
  if (root < 0 || root >= num_nodes()) {
    throw Error("backward: root node id " + std::to_string(root) + " out of range");
  }
  if (nodes_[static_cast<std::size_t>(root)].out.size() != 1) {
    throw Error("backward: root must be scalar-valued, got shape " +
                nodes_[static_cast<std::size_t>(root)].out.shape_str());
  }

  // wants[i] != 0 when a gradient at node i is required, i.e. node i is
  // watched or feeds a node that is. An empty watch list keeps everything.
  std::vector<char> wants(nodes_.size(), watch.empty() ? 1 : 0);
  if (!watch.empty()) {
    for (NodeId w : watch) wants[static_cast<std::size_t>(w)] = 1;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (wants[i]) continue;
      for (NodeId in : nodes_[i].inputs) {
        if (wants[static_cast<std::size_t>(in)]) {
          wants[i] = 1;
          break;
        }
      }
    }
  }

  GradientMap grads(nodes_.size());
  grads.accumulate(root, Tensor::full(nodes_[static_cast<std::size_t>(root)].out.shape(), 1.0));
  for (NodeId id = root; id >= 0; --id) {
    if (!grads.has(id)) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.kind == OpKind::kLeaf) continue;
    backward_node(*this, n, grads.at(id), grads, wants);
  }
  return grads;
}

}  // namespace pointcat
