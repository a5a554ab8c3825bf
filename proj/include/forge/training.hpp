#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "forge/data.hpp"
#include "forge/engine.hpp"
#include "forge/graph.hpp"
#include "forge/metrics.hpp"
#include "forge/rng.hpp"

namespace forge {

/// Seed streams derived from TrainConfig::seed. Params use the seed itself.
enum class SeedStream : std::uint64_t { DataOrder = 1, EvalSampling = 2 };

/// Raised when a graph cannot consume a dataset.
class IncompatibleData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checks that the graph's input and loss target fit the dataset.
inline void check_compatible(const ValidatedGraph& graph, const Dataset& data) {
  if (graph.spec().inputs.size() != 1)
    throw IncompatibleData("graph '" + graph.spec().name + "' must declare exactly one input");
  const Shape& in = graph.shape_of(graph.spec().inputs.front().name);
  if (in.rank() != 2 || !in.has_batch() || static_cast<std::size_t>(in[1]) != data.dim)
    throw IncompatibleData("graph input " + in.str() + " does not accept [?, " +
                           std::to_string(data.dim) + "] images");
  for (const std::string& name : {graph.loss_target(), graph.output()}) {
    const Shape& s = graph.shape_of(name);
    if (s.rank() != 2 || !s.has_batch() || static_cast<std::size_t>(s[1]) != data.n_classes)
      throw IncompatibleData("node '" + name + "' has shape " + s.str() + ", dataset has " +
                             std::to_string(data.n_classes) + " classes");
  }
  if (graph.find_node(graph.output())->op != OpKind::Softmax)
    throw IncompatibleData("output node '" + graph.output() + "' must be a softmax");
}

/// One training run: SGD over seeded minibatches with periodic scoring.
///
/// At every step s that is a multiple of eval_interval two points are
/// recorded: a train point scored on the minibatch just used (before the
/// update), then an eval point scored after the update on a batch of
/// eval_batch_size test rows drawn by a seeded iterator.
class TrainingSession {
 public:
  TrainingSession(ValidatedGraph graph, std::shared_ptr<const Dataset> data, TrainConfig config)
      : graph_(std::move(graph)), data_(std::move(data)), config_(config) {
    if (auto why = config_.check(); !why.empty()) throw std::invalid_argument(why);
    check_compatible(graph_, *data_);
    params_ = init_params(graph_, config_.seed);
    train_batches_.emplace(data_->train, static_cast<std::size_t>(config_.batch_size),
                           derive_seed(config_.seed, static_cast<std::uint64_t>(SeedStream::DataOrder)));
    eval_batches_.emplace(data_->test, static_cast<std::size_t>(config_.eval_batch_size),
                          derive_seed(config_.seed, static_cast<std::uint64_t>(SeedStream::EvalSampling)));
  }

  TrainingSession(const TrainingSession&) = delete;
  TrainingSession& operator=(const TrainingSession&) = delete;

  /// Runs up to n steps, stopping at config.steps. Returns the steps run.
  std::int64_t advance(std::int64_t n) {
    std::int64_t done = 0;
    while (done < n && !finished()) {
      one_step();
      ++done;
    }
    return done;
  }

  void run() { advance(config_.steps - step_); }

  /// Scores the current params on the whole test split.
  MetricPoint final_evaluation() const {
    return evaluate(graph_, params_, data_->test, step_, Split::Eval);
  }

  std::int64_t step() const { return step_; }
  bool finished() const { return step_ >= config_.steps; }
  double last_loss() const { return last_loss_; }
  const ParamSet& params() const { return params_; }
  const std::vector<MetricPoint>& points() const { return points_; }
  const TrainConfig& config() const { return config_; }
  const ValidatedGraph& graph() const { return graph_; }

 private:
  void one_step() {
    const std::int64_t s = step_ + 1;
    const LabeledBatch batch = train_batches_->next();
    LossResult r = loss_and_grads(graph_, params_, batch);
    params_ = sgd_step(params_, r.grads, config_.learning_rate);
    step_ = s;
    last_loss_ = r.loss;
    if (s % config_.eval_interval == 0) {
      PredictionBatch seen{std::move(r.activations.find(graph_.output())->second), batch.labels};
      points_.push_back(measure(seen, s, Split::Train));
      points_.push_back(evaluate(graph_, params_, eval_batches_->next(), s, Split::Eval));
    }
  }

  ValidatedGraph graph_;
  std::shared_ptr<const Dataset> data_;
  TrainConfig config_;
  ParamSet params_;
  std::optional<BatchIterator> train_batches_;
  std::optional<BatchIterator> eval_batches_;
  std::int64_t step_ = 0;
  double last_loss_ = 0.0;
  std::vector<MetricPoint> points_;
};

/// Only the eval points of a run.
inline std::vector<MetricPoint> eval_points(const std::vector<MetricPoint>& points) {
  std::vector<MetricPoint> out;
  for (const auto& p : points)
    if (p.split == Split::Eval) out.push_back(p);
  return out;
}

}  // namespace forge
