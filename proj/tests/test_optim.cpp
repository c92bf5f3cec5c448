#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pointcat/optim.hpp"
#include "pointcat/ops.hpp"

using namespace pointcat;

TEST_CASE("cosine anneal endpoints and midpoint") {
  CHECK(cosine_anneal(0.001, 0, 155) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(cosine_anneal(0.001, 155, 155) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_anneal(0.001, 77.5, 155) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_anneal(0.001, 0, 0), Error);
}

TEST_CASE("adam leaves params unchanged on zero gradient from zero state") {
  ParamSet params;
  params.add("w", Tensor::from_values({3}, {1.0, -2.0, 0.5}));
  AdamOptimizer opt;
  NamedGrads grads;
  grads.emplace("w", Tensor::zeros({3}));
  opt.step(params, grads, 0.1);
  CHECK(params.at("w")[0] == 1.0);
  CHECK(params.at("w")[1] == -2.0);
  CHECK(params.at("w")[2] == 0.5);
  CHECK(opt.moments().at("w").m.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("adam first step moves against the gradient sign by about lr") {
  ParamSet params;
  params.add("w", Tensor::from_values({2}, {0.0, 0.0}));
  AdamOptimizer opt;
  NamedGrads grads;
  grads.emplace("w", Tensor::from_values({2}, {3.0, -0.25}));
  opt.step(params, grads, 0.01);
  CHECK(params.at("w")[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(params.at("w")[1] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam drives (w-3)^2 close to the minimum in 200 steps") {
  // Scalar descent oracle: the same recurrence written out longhand.
  double w_oracle = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * (w_oracle - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w_oracle -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  REQUIRE(std::abs(w_oracle - 3.0) < 0.05);

  ParamSet params;
  params.add("w", Tensor::scalar(0.0));
  AdamOptimizer opt;
  for (int t = 0; t < 200; ++t) {
    Graph g;
    NodeId w = g.leaf(params.at("w"));
    NodeId diff = ops::add(g, w, g.leaf(Tensor::scalar(-3.0)));
    NodeId loss = ops::multiply(g, diff, diff);
    auto grads = g.backward(loss);
    NamedGrads named;
    named.emplace("w", grads.at(w));
    opt.step(params, named, 0.1);
  }
  CHECK(std::abs(params.at("w").value() - 3.0) < 0.05);
  CHECK(params.at("w").value() == doctest::Approx(w_oracle).epsilon(1e-12));
}

TEST_CASE("adam rejects NaN gradients naming the parameter") {
  ParamSet params;
  params.add("layer/W", Tensor::zeros({2}));
  AdamOptimizer opt;
  NamedGrads grads;
  Tensor bad = Tensor::zeros({2});
  bad[0] = std::nan("");
  grads.emplace("layer/W", bad);
  CHECK_THROWS_WITH_AS(opt.step(params, grads, 0.1), doctest::Contains("layer/W"), Error);
}

TEST_CASE("adam skips non-trainable entries") {
  ParamSet params;
  params.add("stats", Tensor::scalar(5.0), /*trainable=*/false);
  AdamOptimizer opt;
  NamedGrads grads;
  grads.emplace("stats", Tensor::scalar(1.0));
  opt.step(params, grads, 0.1);
  CHECK(params.at("stats").value() == 5.0);
}

TEST_CASE("global norm clip rescales to the bound") {
  NamedGrads grads;
  grads.emplace("a", Tensor::from_values({2}, {3.0, 0.0}));
  grads.emplace("b", Tensor::from_values({1}, {4.0}));
  CHECK(clip_global_norm(grads, 10.0) == false);
  CHECK(clip_global_norm(grads, 1.0) == true);
  const double norm = std::sqrt(grads.at("a").array().square().sum() +
                                grads.at("b").array().square().sum());
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}
