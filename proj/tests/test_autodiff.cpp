#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "pointcat/ops.hpp"
#include "pointcat/rng.hpp"
#include "test_support.hpp"

using namespace pointcat;
using pctest::max_grad_error;
using pctest::random_tensor;

namespace {

// Scalarize a tensor with fixed non-uniform weights; deterministic so the
// same weights appear in every finite-difference rebuild.
NodeId weighted(Graph& g, NodeId x) {
  const Tensor& v = g.value(x);
  Tensor w = Tensor::zeros(v.shape());
  for (Index i = 0; i < w.size(); ++i) {
    w[i] = std::sin(0.7 * static_cast<double>(i) + 1.0) + 0.1;
  }
  return ops::sum(g, ops::multiply(g, x, g.leaf(std::move(w))));
}

constexpr double kTol = 1e-4;
constexpr int kShapes = 10;

}  // namespace

TEST_CASE("matmul identity") {
  Graph g;
  NodeId a = g.leaf(Tensor::from_values({2, 2}, {1, 2, 3, 4}));
  NodeId eye = g.leaf(Tensor::from_values({2, 2}, {1, 0, 0, 1}));
  NodeId c = ops::matmul(g, a, eye);
  CHECK(g.value(c).matrix()(0, 0) == 1.0);
  CHECK(g.value(c).matrix()(0, 1) == 2.0);
  CHECK(g.value(c).matrix()(1, 0) == 3.0);
  CHECK(g.value(c).matrix()(1, 1) == 4.0);
}

TEST_CASE("relu definition") {
  Graph g;
  NodeId r = ops::relu(g, g.leaf(Tensor::from_values({3}, {-1, 0, 2})));
  CHECK(g.value(r)[0] == 0.0);
  CHECK(g.value(r)[1] == 0.0);
  CHECK(g.value(r)[2] == 2.0);
}

TEST_CASE("cosine similarity of orthogonal vectors") {
  Graph g;
  NodeId c = ops::cosine_similarity(g, g.leaf(Tensor::from_values({3}, {1, 0, 0})),
                                    g.leaf(Tensor::from_values({3}, {0, 1, 0})));
  CHECK(g.value(c).value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("shape mismatch names the offending shapes") {
  Graph g;
  NodeId a = g.leaf(Tensor::zeros({2, 3}));
  NodeId b = g.leaf(Tensor::zeros({4, 5}));
  std::string message;
  try {
    ops::matmul(g, a, b);
  } catch (const Error& e) {
    message = e.what();
  }
  CHECK(message.find("[2, 3]") != std::string::npos);
  CHECK(message.find("[4, 5]") != std::string::npos);
}

TEST_CASE("backward of x*x at x=3 is 6") {
  Graph g;
  NodeId x = g.leaf(Tensor::scalar(3.0));
  NodeId y = ops::multiply(g, x, x);
  auto grads = g.backward(y);
  CHECK(grads.at(x).value() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward of relu at x=-1 is 0") {
  Graph g;
  NodeId x = g.leaf(Tensor::scalar(-1.0));
  NodeId y = ops::sum(g, ops::relu(g, x));
  auto grads = g.backward(y);
  CHECK(grads.at(x).value() == 0.0);
}

TEST_CASE("backward rejects non-scalar root") {
  Graph g;
  NodeId x = g.leaf(Tensor::zeros({2, 2}));
  NodeId y = ops::relu(g, x);
  CHECK_THROWS_AS((void)g.backward(y), Error);
}

TEST_CASE("finite differences: elementwise and reduction ops") {
  Rng rng(11);
  for (int it = 0; it < kShapes; ++it) {
    const Index r = 1 + static_cast<Index>(rng.bounded(4));
    const Index c = 1 + static_cast<Index>(rng.bounded(5));
    Tensor a = random_tensor({r, c}, rng);
    Tensor b = random_tensor({r, c}, rng);
    Tensor pos = random_tensor({r, c}, rng, 0.1, 2.0);

    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::add(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::multiply(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::subtract(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::scalar_scale(g, in[0], -1.7));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::relu(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::exponential(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({pos}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::natural_log(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return ops::sum(g, in[0]);
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return ops::mean(g, in[0]);
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return ops::l2_norm(g, in[0]);
          }) < kTol);
  }
}

TEST_CASE("finite differences: linear algebra ops") {
  Rng rng(12);
  for (int it = 0; it < kShapes; ++it) {
    const Index r = 1 + static_cast<Index>(rng.bounded(4));
    const Index k = 1 + static_cast<Index>(rng.bounded(4));
    const Index c = 1 + static_cast<Index>(rng.bounded(4));
    Tensor a = random_tensor({r, k}, rng);
    Tensor b = random_tensor({k, c}, rng);
    Tensor bias = random_tensor({k}, rng);

    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::matmul(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::transpose(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a, bias}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::add(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::reshape(g, in[0], {k, r}));
          }) < kTol);
    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            auto parts = std::vector<NodeId>{in[0], in[0]};
            return weighted(g, ops::concat_last_dim(g, parts));
          }) < kTol);
  }
}

TEST_CASE("finite differences: row and pooling ops") {
  Rng rng(13);
  for (int it = 0; it < kShapes; ++it) {
    const Index n = 1 + static_cast<Index>(rng.bounded(3));
    const Index k = 2 + static_cast<Index>(rng.bounded(3));
    const Index d = 1 + static_cast<Index>(rng.bounded(4));
    Tensor cube = random_tensor({n, k, d}, rng);
    Tensor a = random_tensor({n * k, d}, rng);
    Tensor b = random_tensor({n * k, d}, rng);

    CHECK(max_grad_error({cube}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::max_pool_points(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::softmax_last_dim(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::row_l2_normalize(g, in[0]));
          }) < kTol);
    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::row_dot(g, in[0], in[1]));
          }) < kTol);
    CHECK(max_grad_error({a, b}, [&](Graph& g, const std::vector<NodeId>& in) {
            return ops::cosine_similarity(g, in[0], in[1]);
          }) < kTol);

    // Mask keeps at least one entry per row.
    Tensor mask = Tensor::zeros({n * k, d});
    for (Index row = 0; row < n * k; ++row) {
      const Index keep = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(d)));
      for (Index col = 0; col < d; ++col) {
        mask.matrix()(row, col) = (col == keep || rng.uniform() < 0.5) ? 1.0 : 0.0;
      }
    }
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::row_logsumexp_masked(g, in[0], mask));
          }) < kTol);

    // Radius between the smallest and largest row norm so both branches run.
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::row_l2_clip(g, in[0], 1.0));
          }) < kTol);

    std::vector<Index> gather = {0, 0, static_cast<Index>(rng.bounded(n * k))};
    CHECK(max_grad_error({a}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::gather_rows(g, in[0], gather));
          }) < kTol);
  }
}

TEST_CASE("finite differences: batch normalization") {
  Rng rng(14);
  for (int it = 0; it < kShapes; ++it) {
    const Index r = 2 + static_cast<Index>(rng.bounded(4));
    const Index c = 1 + static_cast<Index>(rng.bounded(4));
    Tensor x = random_tensor({r, c}, rng);
    Tensor gamma = random_tensor({c}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({c}, rng);
    Tensor rmean = random_tensor({c}, rng, -0.5, 0.5);
    Tensor rvar = random_tensor({c}, rng, 0.5, 2.0);

    CHECK(max_grad_error({x, gamma, beta}, [&](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, ops::batch_norm_train(g, in[0], in[1], in[2]));
          }) < kTol);
    CHECK(max_grad_error({x, gamma, beta, rmean, rvar},
                         [&](Graph& g, const std::vector<NodeId>& in) {
                           return weighted(
                               g, ops::batch_norm_eval(g, in[0], in[1], in[2], in[3], in[4]));
                         }) < kTol);
  }
}

TEST_CASE("finite differences: logit margin") {
  Rng rng(15);
  for (int it = 0; it < kShapes; ++it) {
    const Index m = 2 + static_cast<Index>(rng.bounded(5));
    Tensor logits = random_tensor({m}, rng);
    const int y = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(m)));
    CHECK(max_grad_error({logits}, [&](Graph& g, const std::vector<NodeId>& in) {
            return ops::logit_margin(g, in[0], y);
          }) < kTol);
  }
}

TEST_CASE("max pool is invariant under point permutation") {
  Rng rng(16);
  for (int it = 0; it < 20; ++it) {
    const Index n = 1 + static_cast<Index>(rng.bounded(3));
    const Index k = 2 + static_cast<Index>(rng.bounded(6));
    const Index d = 1 + static_cast<Index>(rng.bounded(5));
    Tensor cube = random_tensor({n, k, d}, rng);

    std::vector<Index> perm(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (Index i = k - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[rng.bounded(static_cast<std::uint64_t>(i + 1))]);
    }
    Tensor shuffled = Tensor::zeros({n, k, d});
    for (Index b = 0; b < n; ++b) {
      for (Index p = 0; p < k; ++p) {
        shuffled.matrix(n * k, d).row(b * k + p) =
            cube.matrix(n * k, d).row(b * k + perm[static_cast<std::size_t>(p)]);
      }
    }

    Graph g1, g2;
    NodeId o1 = ops::max_pool_points(g1, g1.leaf(cube));
    NodeId o2 = ops::max_pool_points(g2, g2.leaf(shuffled));
    CHECK((g1.value(o1).array() == g2.value(o2).array()).all());

    // The pooled gradient lands on the same points, so it is the inverse
    // permutation of the unpermuted gradient.
    NodeId x1 = 0, x2 = 0;
    Tensor w = random_tensor({n, d}, rng);
    auto grad1 = g1.backward(ops::sum(g1, ops::multiply(g1, o1, g1.leaf(w))));
    auto grad2 = g2.backward(ops::sum(g2, ops::multiply(g2, o2, g2.leaf(w))));
    const Tensor& d1 = grad1.at(x1);
    const Tensor& d2 = grad2.at(x2);
    for (Index b = 0; b < n; ++b) {
      for (Index p = 0; p < k; ++p) {
        for (Index col = 0; col < d; ++col) {
          CHECK(d2.matrix(n * k, d)(b * k + p, col) ==
                d1.matrix(n * k, d)(b * k + perm[static_cast<std::size_t>(p)], col));
        }
      }
    }
  }
}

TEST_CASE("batch norm training mode normalizes each feature") {
  Rng rng(17);
  Tensor x = random_tensor({64, 7}, rng);
  Graph g;
  NodeId bn = ops::batch_norm_train(g, g.leaf(x), g.leaf(Tensor::full({7}, 1.0)),
                                    g.leaf(Tensor::zeros({7})));
  auto out = g.value(bn).matrix();
  for (Index c = 0; c < 7; ++c) {
    const double mean = out.col(c).mean();
    const double var = (out.col(c).array() - mean).square().sum() / 64.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("graph evaluation is deterministic") {
  Rng rng(18);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4, 6}, rng);
  auto run = [&] {
    Graph g;
    NodeId y = ops::softmax_last_dim(g, ops::matmul(g, g.leaf(a), g.leaf(b)));
    return g.value(ops::sum(g, y)).value();
  };
  const double first = run();
  for (int i = 0; i < 5; ++i) {
    const double again = run();
    CHECK(std::memcmp(&first, &again, sizeof(double)) == 0);
  }
}

TEST_CASE("non-finite op output is rejected with provenance") {
  Graph g;
  NodeId x = g.leaf(Tensor::scalar(-1.0));
  CHECK_THROWS_WITH_AS(ops::natural_log(g, x), doctest::Contains("natural-log"), Error);
}

TEST_CASE("watch list prunes unrelated gradients") {
  Graph g;
  NodeId a = g.leaf(Tensor::scalar(2.0));
  NodeId b = g.leaf(Tensor::scalar(5.0));
  NodeId y = ops::sum(g, ops::multiply(g, a, b));
  std::vector<NodeId> watch = {a};
  auto grads = g.backward(y, watch);
  CHECK(grads.at(a).value() == doctest::Approx(5.0));
  CHECK_FALSE(grads.has(b));
}
