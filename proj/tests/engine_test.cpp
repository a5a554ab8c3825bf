#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "forge/dsl.hpp"
#include "forge/engine.hpp"
#include "generators.hpp"

namespace forge {
namespace {

ValidatedGraph load_graph(const std::string& rel) {
  std::ifstream in(std::string(FORGE_SOURCE_DIR) + "/" + rel);
  std::ostringstream s;
  s << in.rdbuf();
  auto r = parse(s.str());
  if (!r.ok()) throw std::runtime_error(r.errors.front().message);
  return validate(*r.spec).value();
}

ValidatedGraph tiny_softmax(std::size_t d, std::size_t n) {
  GraphSpec g;
  g.name = "tiny";
  g.inputs = {{"x", Shape{Shape::kBatch, static_cast<std::int64_t>(d)}}};
  g.params = {{"W", Shape{static_cast<std::int64_t>(d), static_cast<std::int64_t>(n)}, Init::Zeros},
              {"b", Shape{static_cast<std::int64_t>(n)}, Init::Zeros}};
  g.nodes = {{"xw", OpKind::MatMul, {"x", "W"}},
             {"logits", OpKind::AddBias, {"xw", "b"}},
             {"p", OpKind::Softmax, {"logits"}}};
  g.output = "p";
  g.loss = LossDecl{LossKind::CrossEntropy, "p"};
  return validate(g).value();
}

void randomize(ParamSet& params, SplitMix64& rng, double scale = 1.0) {
  for (auto& [name, t] : params)
    for (double& v : t.values) v = rng.uniform(-scale, scale);
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  const Tensor p = ops::softmax_rows(Tensor({1, 2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Ops, SoftmaxOfLn2) {
  const Tensor p = ops::softmax_rows(Tensor({1, 2}, {std::log(2.0), 0.0}));
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Ops, SoftmaxSurvivesHugeLogits) {
  const Tensor p = ops::softmax_rows(Tensor({1, 3}, {1000.0, 999.0, -1000.0}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0) + p(0, 1) + p(0, 2), 1.0, 1e-12);
}

TEST(Ops, MatMulWithIdentity) {
  const Tensor a({1, 2}, {1.0, 2.0});
  const Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(ops::matmul(a, eye), a);
}

TEST(Ops, TransposedProductsAgreeWithPlainProduct) {
  SplitMix64 rng(5);
  Tensor a({3, 4}), b({3, 2});
  for (double& v : a.values) v = rng.uniform(-1, 1);
  for (double& v : b.values) v = rng.uniform(-1, 1);
  Tensor at({4, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  const Tensor tn = ops::matmul_tn(a, b);
  const Tensor plain = ops::matmul(at, b);
  for (std::size_t k = 0; k < tn.values.size(); ++k) EXPECT_NEAR(tn.values[k], plain.values[k], 1e-15);
}

TEST(Ops, ReluZeroesNonPositive) {
  const Tensor r = ops::relu(Tensor({1, 3}, {-1.0, 0.0, 2.0}));
  EXPECT_EQ(r.values, (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Ops, ShapeMismatchThrows) {
  EXPECT_THROW(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST(Init, ZerosAreZero) {
  const auto g = load_graph("graphs/mnist_softmax.graph");
  const auto params = init_params(g, 1);
  for (double v : params.at("W").values) ASSERT_EQ(v, 0.0);
}

TEST(Init, GlorotWithinLimit) {
  EXPECT_NEAR(glorot_limit(Shape{784, 10}), 0.08692, 1e-5);
  EXPECT_DOUBLE_EQ(glorot_limit(Shape{784, 10}), 0.0869291381699617);
  const auto g = load_graph("graphs/mnist_mlp.graph");
  const auto params = init_params(g, 42);
  const double r = glorot_limit(Shape{784, 32});
  const auto& w = params.at("W1").values;
  double lo = 0, hi = 0;
  for (double v : w) {
    ASSERT_LE(std::abs(v), r);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // 25k draws should come close to both ends
  EXPECT_LT(lo, -0.99 * r);
  EXPECT_GT(hi, 0.99 * r);
}

TEST(Init, SameSeedIsBitwiseIdentical) {
  const auto g = load_graph("graphs/mnist_mlp.graph");
  EXPECT_EQ(init_params(g, 7), init_params(g, 7));
  EXPECT_NE(init_params(g, 7), init_params(g, 8));
}

TEST(Forward, BindChecksInputShape) {
  const auto g = tiny_softmax(3, 2);
  EXPECT_THROW(forward(g, init_params(g, 0), Tensor({2, 4})), ShapeError);
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const auto g = tiny_softmax(5, 4);
  SplitMix64 rng(1);
  auto params = init_params(g, 0);
  randomize(params, rng, 3.0);
  const auto batch = testing::random_batch(rng, 16, 5, 4);
  const auto out = forward(g, params, batch.images);
  const Tensor& p = out.at("p");
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (double v : p.row(i)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_EQ(forward(g, params, batch.images), out);
}

TEST(Forward, NonFiniteValueIsNumericError) {
  const auto g = tiny_softmax(2, 2);
  auto params = init_params(g, 0);
  params.at("W").values[0] = std::numeric_limits<double>::max();
  const Tensor x({1, 2}, {1.0, 1.0});
  params.at("W").values[2] = std::numeric_limits<double>::max();
  EXPECT_THROW(forward(g, params, x), NumericError);
}

TEST(Loss, PerfectMatchHasZeroLossAndGradient) {
  // a huge margin makes softmax one-hot in double precision
  const auto g = tiny_softmax(1, 2);
  auto params = init_params(g, 0);
  params.at("b").values = {1000.0, 0.0};
  LabeledBatch batch{Tensor({1, 1}, {0.0}), Tensor({1, 2}, {1.0, 0.0})};
  const auto r = loss_and_grads(g, params, batch);
  EXPECT_EQ(r.loss, 0.0);
  for (double v : r.grads.at("b").values) EXPECT_EQ(v, 0.0);
}

TEST(Loss, UniformPredictionCostsLn2) {
  const auto g = tiny_softmax(1, 2);
  LabeledBatch batch{Tensor({1, 1}, {0.5}), Tensor({1, 2}, {1.0, 0.0})};
  EXPECT_NEAR(loss_and_grads(g, init_params(g, 0), batch).loss, 0.693147, 5e-7);
}

TEST(Loss, ZeroInitLogitGradientIsUniformMinusLabel) {
  const auto g = tiny_softmax(3, 4);
  SplitMix64 rng(2);
  const auto batch = testing::random_batch(rng, 5, 3, 4);
  const auto r = loss_and_grads(g, init_params(g, 0), batch);
  // the bias gradient is the column sum of the logits gradient
  const Tensor& gb = r.grads.at("b");
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 0;
    for (std::size_t i = 0; i < 5; ++i) expected += (0.25 - batch.labels(i, j)) / 5.0;
    EXPECT_NEAR(gb.values[j], expected, 1e-15);
  }
}

TEST(Loss, ParamsOffThePathGetZeroGradient) {
  GraphSpec g;
  g.name = "side";
  g.inputs = {{"x", Shape{Shape::kBatch, 2}}};
  g.params = {{"W", Shape{2, 2}, Init::Glorot}, {"V", Shape{2, 3}, Init::Glorot}};
  g.nodes = {{"l", OpKind::MatMul, {"x", "W"}}, {"p", OpKind::Softmax, {"l"}}, {"side", OpKind::MatMul, {"x", "V"}}};
  g.output = "p";
  g.loss = LossDecl{LossKind::CrossEntropy, "p"};
  const auto vg = validate(g).value();
  SplitMix64 rng(3);
  const auto r = loss_and_grads(vg, init_params(vg, 1), testing::random_batch(rng, 3, 2, 2));
  for (double v : r.grads.at("V").values) EXPECT_EQ(v, 0.0);
}

TEST(Sgd, ZeroLearningRateKeepsParams) {
  ParamSet p{{"w", Tensor({1}, {1.0})}};
  ParamSet g{{"w", Tensor({1}, {0.5})}};
  EXPECT_EQ(sgd_step(p, g, 0.0), p);
}

TEST(Sgd, SingleUpdate) {
  ParamSet p{{"w", Tensor({1}, {1.0})}};
  ParamSet g{{"w", Tensor({1}, {0.5})}};
  EXPECT_DOUBLE_EQ(sgd_step(p, g, 0.5).at("w").values[0], 0.75);
}

TEST(Sgd, TwoStepsEqualOneDoubledStep) {
  ParamSet p{{"w", Tensor({1, 2}, {1.0, -2.0})}};
  ParamSet g{{"w", Tensor({1, 2}, {0.25, 0.5})}};
  EXPECT_EQ(sgd_step(sgd_step(p, g, 0.5), g, 0.5), sgd_step(p, g, 1.0));
}

TEST(GradCheck, MnistSoftmaxSmallBatch) {
  const auto g = load_graph("graphs/mnist_softmax.graph");
  SplitMix64 rng(4);
  auto params = init_params(g, 0);
  randomize(params, rng, 0.05);
  EXPECT_LE(grad_check(g, params, testing::random_batch(rng, 4, 784, 10)), 1e-6);
}

// The 784->32->10 MLP has coordinates whose true gradient is ~1e-7. There the
// central difference is dominated by rounding in the loss (a few 1e-12 after
// dividing by 2*eps), so only the absolute gap and the large coordinates are
// held to tight bounds here.
TEST(GradCheck, MnistMlpAgreesUpToRoundoff) {
  const auto g = load_graph("graphs/mnist_mlp.graph");
  const auto params = init_params(g, 42);
  SplitMix64 rng(3000);
  const auto batch = testing::random_batch(rng, 4, 784, 10);
  const auto analytic = loss_and_grads(g, params, batch).grads;
  ParamSet probe = params;
  double max_abs = 0, max_rel_large = 0;
  for (auto& [name, tensor] : probe) {
    const Tensor& grad = analytic.at(name);
    for (std::size_t i = 0; i < tensor.values.size(); i += 7) {
      const double original = tensor.values[i];
      tensor.values[i] = original + 1e-5;
      const double up = loss(g, probe, batch);
      tensor.values[i] = original - 1e-5;
      const double down = loss(g, probe, batch);
      tensor.values[i] = original;
      const double gap = std::abs(grad.values[i] - (up - down) / 2e-5);
      max_abs = std::max(max_abs, gap);
      if (std::abs(grad.values[i]) >= 1e-4) max_rel_large = std::max(max_rel_large, gap / std::abs(grad.values[i]));
    }
  }
  EXPECT_LE(max_abs, 1e-10);
  EXPECT_LE(max_rel_large, 1e-6);
}

TEST(GradCheck, ZeroInitSoftmax) {
  const auto g = tiny_softmax(6, 3);
  SplitMix64 rng(6);
  EXPECT_LE(grad_check(g, init_params(g, 0), testing::random_batch(rng, 4, 6, 3)), 1e-6);
}

TEST(Property, GradCheckOnRandomGraphs) {
  SplitMix64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = validate(testing::random_spec(rng)).value();
    auto params = init_params(g, trial);
    randomize(params, rng);
    const auto& in = g.spec().inputs.front().shape.dims;
    const auto& out = g.shape_of(g.output()).dims;
    const auto m = 1 + rng.below(8);
    const auto batch = testing::random_batch(rng, m, static_cast<std::size_t>(in[1]), static_cast<std::size_t>(out[1]));
    const double err = grad_check(g, params, batch);
    EXPECT_LE(err, 1e-6) << canonical_serialize(g.spec());
    worst = std::max(worst, err);
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Property, SmallStepsDoNotIncreaseLoss) {
  const auto g = load_graph("graphs/blobs_mlp.graph");
  SplitMix64 rng(8);
  auto params = init_params(g, 8);
  const auto batch = testing::random_batch(rng, 32, 64, 10);
  double previous = loss(g, params, batch);
  int rises = 0;
  for (int step = 0; step < 10; ++step) {
    params = sgd_step(params, loss_and_grads(g, params, batch).grads, 1e-3);
    const double now = loss(g, params, batch);
    rises += now > previous;
    previous = now;
  }
  EXPECT_LE(rises, 1);
}

}  // namespace
}  // namespace forge
