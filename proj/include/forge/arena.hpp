#pragma once

#include <future>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/graph.hpp"
#include "forge/metrics.hpp"
#include "forge/training.hpp"

namespace forge {

enum class Metric { Accuracy, InfoAcc };
enum class Winner { A, B, Draw };

inline constexpr std::string_view metric_name(Metric m) {
  return m == Metric::Accuracy ? "accuracy" : "infoacc";
}

inline Metric metric_from_name(std::string_view s) {
  if (s == "accuracy") return Metric::Accuracy;
  if (s == "infoacc") return Metric::InfoAcc;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

inline constexpr std::string_view winner_name(Winner w) {
  switch (w) {
    case Winner::A: return "A";
    case Winner::B: return "B";
    case Winner::Draw: return "draw";
  }
  return "?";
}

struct BattleConfig {
  TrainConfig train;
  std::string dataset_id;
  std::vector<Metric> priority{Metric::Accuracy, Metric::InfoAcc};

  friend bool operator==(const BattleConfig&, const BattleConfig&) = default;
};

struct Contender {
  std::string id;
  MetricPoint final;
  std::vector<MetricPoint> curve;

  friend bool operator==(const Contender&, const Contender&) = default;
};

struct BattleResult {
  Contender a;
  Contender b;
  Winner winner = Winner::Draw;
  BattleConfig config;
  std::uint64_t seed = 0;

  friend bool operator==(const BattleResult&, const BattleResult&) = default;
};

/// Lexicographic over `priority`; exact equality is a tie.
inline Winner compare_finals(const MetricPoint& a, const MetricPoint& b,
                             const std::vector<Metric>& priority = {Metric::Accuracy, Metric::InfoAcc}) {
  for (Metric m : priority) {
    const double va = m == Metric::Accuracy ? a.accuracy : a.infoacc;
    const double vb = m == Metric::Accuracy ? b.accuracy : b.infoacc;
    if (va > vb) return Winner::A;
    if (vb > va) return Winner::B;
  }
  return Winner::Draw;
}

/// Trains both specs under the same seed, batch order and step budget, then
/// scores each on the full test split. The two runs share nothing mutable
/// and execute concurrently.
inline BattleResult run_battle(const GraphSpec& spec_a, const GraphSpec& spec_b,
                               std::shared_ptr<const Dataset> data, const BattleConfig& config,
                               std::string id_a = "A", std::string id_b = "B") {
  if (auto why = config.train.check(); !why.empty()) throw std::invalid_argument(why);
  const ValidatedGraph ga = validate(spec_a).value();
  const ValidatedGraph gb = validate(spec_b).value();
  check_compatible(ga, *data);
  check_compatible(gb, *data);

  auto train = [&](const ValidatedGraph& g, std::string id) {
    TrainingSession session(g, data, config.train);
    session.run();
    return Contender{std::move(id), session.final_evaluation(), session.points()};
  };
  auto future_b = std::async(std::launch::async, train, std::cref(gb), std::move(id_b));
  Contender a = train(ga, std::move(id_a));
  Contender b = future_b.get();

  BattleResult result{std::move(a), std::move(b), Winner::Draw, config, config.train.seed};
  result.winner = compare_finals(result.a.final, result.b.final, config.priority);
  return result;
}

}  // namespace forge
