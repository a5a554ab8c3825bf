#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "forge/arena.hpp"
#include "forge/dsl.hpp"

namespace forge {
namespace {

GraphSpec load_spec(const std::string& rel) {
  std::ifstream in(std::string(FORGE_SOURCE_DIR) + "/" + rel);
  std::ostringstream s;
  s << in.rdbuf();
  auto r = parse(s.str());
  if (!r.ok()) throw std::runtime_error(r.errors.front().message);
  return *r.spec;
}

MetricPoint final_of(double acc, double info) { return {100, Split::Eval, acc, info, 200}; }

std::shared_ptr<const Dataset> separable_blobs() {
  BlobOptions o;
  o.spread = 0.0;
  o.m_per_class = 20;
  return std::make_shared<const Dataset>(synthetic_blobs(o));
}

BattleConfig short_config() {
  BattleConfig c;
  c.train.steps = 100;
  c.train.batch_size = 40;
  c.train.eval_batch_size = 40;
  c.dataset_id = "blobs";
  return c;
}

TEST(CompareFinals, HigherAccuracyWins) {
  EXPECT_EQ(compare_finals(final_of(0.93, 0.0), final_of(0.91, 3.0)), Winner::A);
  EXPECT_EQ(compare_finals(final_of(0.91, 3.0), final_of(0.93, 0.0)), Winner::B);
}

TEST(CompareFinals, InfoAccBreaksAccuracyTie) {
  EXPECT_EQ(compare_finals(final_of(0.9, 1.2), final_of(0.9, 0.8)), Winner::A);
}

TEST(CompareFinals, AllEqualIsDraw) {
  EXPECT_EQ(compare_finals(final_of(0.9, 1.2), final_of(0.9, 1.2)), Winner::Draw);
}

TEST(CompareFinals, PriorityOrderIsHonoured) {
  EXPECT_EQ(compare_finals(final_of(0.93, 0.5), final_of(0.91, 1.0), {Metric::InfoAcc, Metric::Accuracy}),
            Winner::B);
}

TEST(CompareFinals, NoEpsilonForTies) {
  EXPECT_EQ(compare_finals(final_of(0.5, 1.0), final_of(0.5, std::nextafter(1.0, 2.0))), Winner::B);
}

TEST(Battle, SelfBattleIsADraw) {
  const GraphSpec g = load_spec("graphs/blobs_softmax.graph");
  const auto r = run_battle(g, g, separable_blobs(), short_config());
  EXPECT_EQ(r.winner, Winner::Draw);
  EXPECT_EQ(r.a.final, r.b.final);
  EXPECT_EQ(r.a.curve, r.b.curve);
}

TEST(Battle, LearnerBeatsDeadGraph) {
  const auto r = run_battle(load_spec("graphs/blobs_softmax.graph"), load_spec("graphs/blobs_dead.graph"),
                            separable_blobs(), short_config());
  EXPECT_EQ(r.winner, Winner::A);
}

TEST(Battle, RerunIsBitwiseIdentical) {
  const auto a = load_spec("graphs/blobs_mlp.graph"), b = load_spec("graphs/blobs_softmax.graph");
  BlobOptions o;
  o.m_per_class = 20;
  const auto data = std::make_shared<const Dataset>(synthetic_blobs(o));
  EXPECT_EQ(run_battle(a, b, data, short_config()), run_battle(a, b, data, short_config()));
}

TEST(Battle, SwappingSidesSwapsTheWinner) {
  const auto a = load_spec("graphs/blobs_softmax.graph"), b = load_spec("graphs/blobs_dead.graph");
  const auto data = separable_blobs();
  const auto ab = run_battle(a, b, data, short_config());
  const auto ba = run_battle(b, a, data, short_config());
  EXPECT_EQ(ab.winner, Winner::A);
  EXPECT_EQ(ba.winner, Winner::B);
  EXPECT_EQ(ab.a.final, ba.b.final);
  EXPECT_EQ(ab.b.final, ba.a.final);
}

TEST(Battle, EchoesConfigAndSeed) {
  const GraphSpec g = load_spec("graphs/blobs_softmax.graph");
  auto cfg = short_config();
  cfg.train.seed = 9;
  const auto r = run_battle(g, g, separable_blobs(), cfg, "left", "right");
  EXPECT_EQ(r.config, cfg);
  EXPECT_EQ(r.seed, 9u);
  EXPECT_EQ(r.a.id, "left");
  EXPECT_EQ(r.b.id, "right");
  EXPECT_EQ(r.a.final.batch_size, 40);  // full test split of 200 rows / 5
}

TEST(Battle, IncompatibleGraphIsRejected) {
  const GraphSpec mnist = load_spec("graphs/mnist_softmax.graph");
  const GraphSpec blobs = load_spec("graphs/blobs_softmax.graph");
  EXPECT_THROW(run_battle(blobs, mnist, separable_blobs(), short_config()), IncompatibleData);
}

}  // namespace
}  // namespace forge
