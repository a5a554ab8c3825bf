#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/batch.hpp"
#include "forge/graph.hpp"
#include "forge/rng.hpp"
#include "forge/tensor.hpp"

namespace forge {

using ParamSet = std::map<std::string, Tensor, std::less<>>;
/// Values of every input, param and node after a forward pass.
using Activations = std::map<std::string, Tensor, std::less<>>;

struct TrainConfig {
  std::int64_t batch_size = 100;
  double learning_rate = 0.5;
  std::int64_t steps = 1000;
  std::uint64_t seed = 42;
  std::int64_t eval_interval = 20;
  std::int64_t eval_batch_size = 100;

  /// Empty when valid, else what is wrong.
  std::string check() const {
    if (batch_size < 1) return "batch_size must be positive";
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) return "learning_rate must be positive";
    if (steps < 1) return "steps must be positive";
    if (eval_interval < 1) return "eval_interval must be positive";
    if (eval_batch_size < 1) return "eval_batch_size must be positive";
    if (eval_interval > steps) return "eval_interval must not exceed steps";
    return {};
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Glorot half-width sqrt(6 / (fan_in + fan_out)). A vector [n] uses
/// fan_in = fan_out = n; higher ranks use the first and last dimensions.
inline double glorot_limit(const Shape& shape) {
  const double fan_in = static_cast<double>(shape.dims.front());
  const double fan_out = static_cast<double>(shape.dims.back());
  return std::sqrt(6.0 / (fan_in + fan_out));
}

/// Params in name order. Glorot params take one SplitMix64 draw per
/// element, row-major, from a single generator seeded with `seed`; zeros
/// params take none.
inline ParamSet init_params(const ValidatedGraph& graph, std::uint64_t seed) {
  std::vector<const ParamDecl*> decls;
  for (const auto& p : graph.spec().params) decls.push_back(&p);
  std::sort(decls.begin(), decls.end(), [](auto* a, auto* b) { return a->name < b->name; });

  SplitMix64 rng(seed);
  ParamSet params;
  for (const ParamDecl* p : decls) {
    std::vector<std::size_t> dims(p->shape.dims.begin(), p->shape.dims.end());
    Tensor t(dims);
    if (p->init == Init::Glorot) {
      const double r = glorot_limit(p->shape);
      for (double& v : t.values) v = rng.uniform(-r, r);
    }
    params.emplace(p->name, std::move(t));
  }
  return params;
}

namespace engine_detail {

inline const InputDecl& single_input(const ValidatedGraph& graph) {
  if (graph.spec().inputs.size() != 1)
    throw ShapeError("graph '" + graph.spec().name + "' must declare exactly one input, has " +
                     std::to_string(graph.spec().inputs.size()));
  return graph.spec().inputs.front();
}

inline void bind_check(const Shape& declared, const Tensor& actual, std::string_view what) {
  bool ok = declared.rank() == actual.rank();
  for (std::size_t i = 0; ok && i < declared.rank(); ++i)
    ok = declared[i] == Shape::kBatch || static_cast<std::size_t>(declared[i]) == actual.shape[i];
  if (!ok)
    throw ShapeError(std::string(what) + " has shape " + actual.shape_string() + ", declared " +
                     declared.str());
}

inline void check_params(const ValidatedGraph& graph, const ParamSet& params) {
  for (const auto& p : graph.spec().params) {
    auto it = params.find(p.name);
    if (it == params.end()) throw ShapeError("missing value for param '" + p.name + "'");
    bind_check(p.shape, it->second, "param '" + p.name + "'");
  }
}

inline Tensor eval_node(const NodeDecl& node, const Activations& values) {
  auto arg = [&](std::size_t i) -> const Tensor& { return values.find(node.operands[i])->second; };
  switch (node.op) {
    case OpKind::MatMul: return ops::matmul(arg(0), arg(1));
    case OpKind::AddBias: return ops::add_bias(arg(0), arg(1));
    case OpKind::ReLU: return ops::relu(arg(0));
    case OpKind::Softmax: return ops::softmax_rows(arg(0));
  }
  throw std::logic_error("unknown op");
}

/// -(1/m) Σ y log softmax(logits), computed from the logits directly.
inline double mean_cross_entropy(const Tensor& logits, const Tensor& labels) {
  const Tensor log_probs = ops::log_softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    const double y = labels.values[i];
    if (y != 0.0) loss -= y * log_probs.values[i];  // 0 * log 0 := 0
  }
  loss /= static_cast<double>(logits.rows());
  if (!std::isfinite(loss)) throw NumericError("numeric overflow: loss is not finite");
  return loss;
}

}  // namespace engine_detail

/// Evaluates every node in topological order. The input's batch wildcard
/// binds to input.rows(). Throws ShapeError on a binding mismatch and
/// NumericError if any node produces a non-finite value.
inline Activations forward(const ValidatedGraph& graph, const ParamSet& params, const Tensor& input) {
  const auto& in = engine_detail::single_input(graph);
  engine_detail::bind_check(in.shape, input, "input '" + in.name + "'");
  engine_detail::check_params(graph, params);

  Activations values;
  values.emplace(in.name, input);
  for (const auto& [name, t] : params) values.emplace(name, t);
  for (std::size_t idx : graph.order()) {
    const auto& node = graph.spec().nodes[idx];
    Tensor out = engine_detail::eval_node(node, values);
    if (!out.all_finite())
      throw NumericError("numeric overflow: node '" + node.name + "' (" +
                         std::string(op_name(node.op)) + ") produced a non-finite value");
    values.insert_or_assign(node.name, std::move(out));
  }
  return values;
}

/// Mean cross-entropy of the loss target against batch.labels.
inline double loss(const ValidatedGraph& graph, const ParamSet& params, const LabeledBatch& batch) {
  const auto values = forward(graph, params, batch.images);
  const NodeDecl& target = *graph.find_node(graph.loss_target());
  const Tensor& logits = values.find(target.operands[0])->second;
  if (batch.labels.shape != logits.shape)
    throw ShapeError("labels have shape " + batch.labels.shape_string() + ", prediction '" +
                     target.name + "' has " + logits.shape_string());
  return engine_detail::mean_cross_entropy(logits, batch.labels);
}

struct LossResult {
  double loss = 0.0;
  ParamSet grads;
  /// Forward values, including the loss target's probabilities.
  Activations activations;
};

/// Mean cross-entropy of the loss target against batch.labels and its
/// gradient with respect to every param by reverse accumulation.
/// Softmax and cross-entropy are fused: the gradient at the softmax operand
/// is (p - y) / m.
inline LossResult loss_and_grads(const ValidatedGraph& graph, const ParamSet& params,
                                 const LabeledBatch& batch) {
  LossResult result;
  result.activations = forward(graph, params, batch.images);
  const auto& values = result.activations;

  const NodeDecl& target = *graph.find_node(graph.loss_target());
  const Tensor& probs = values.find(target.name)->second;
  const Tensor& logits = values.find(target.operands[0])->second;
  if (batch.labels.shape != probs.shape)
    throw ShapeError("labels have shape " + batch.labels.shape_string() + ", prediction '" +
                     target.name + "' has " + probs.shape_string());

  const double inv_m = 1.0 / static_cast<double>(probs.rows());
  result.loss = engine_detail::mean_cross_entropy(logits, batch.labels);

  // Which values depend on a param (and therefore need a gradient).
  std::set<std::string, std::less<>> needs_grad;
  for (const auto& p : graph.spec().params) needs_grad.insert(p.name);
  for (std::size_t idx : graph.order()) {
    const auto& node = graph.spec().nodes[idx];
    for (const auto& o : node.operands)
      if (needs_grad.contains(o)) {
        needs_grad.insert(node.name);
        break;
      }
  }

  std::map<std::string, Tensor, std::less<>> grads;
  auto accumulate = [&](const std::string& name, Tensor g) {
    if (!needs_grad.contains(name)) return;
    auto it = grads.find(name);
    if (it == grads.end()) grads.emplace(name, std::move(g));
    else ops::axpy(1.0, g, it->second);
  };

  {
    Tensor seed = probs;
    for (std::size_t i = 0; i < seed.values.size(); ++i)
      seed.values[i] = (probs.values[i] - batch.labels.values[i]) * inv_m;
    accumulate(target.operands[0], std::move(seed));
  }

  const auto& order = graph.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = graph.spec().nodes[*it];
    auto g_it = grads.find(node.name);
    if (g_it == grads.end()) continue;
    const Tensor upstream = std::move(g_it->second);
    grads.erase(g_it);
    auto arg = [&](std::size_t i) -> const Tensor& { return values.find(node.operands[i])->second; };
    auto wants = [&](std::size_t i) { return needs_grad.contains(node.operands[i]); };

    switch (node.op) {
      case OpKind::MatMul:
        if (wants(0)) accumulate(node.operands[0], ops::matmul_nt(upstream, arg(1)));
        if (wants(1)) accumulate(node.operands[1], ops::matmul_tn(arg(0), upstream));
        break;
      case OpKind::AddBias:
        if (wants(0)) accumulate(node.operands[0], upstream);
        if (wants(1)) accumulate(node.operands[1], ops::column_sum(upstream));
        break;
      case OpKind::ReLU: {
        Tensor g = upstream;
        const Tensor& x = arg(0);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          if (!(x.values[i] > 0.0)) g.values[i] = 0.0;
        accumulate(node.operands[0], std::move(g));
        break;
      }
      case OpKind::Softmax: {
        // dx = p * (g - <g, p>) per row
        const Tensor& p = values.find(node.name)->second;
        Tensor g = upstream;
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto pr = p.row(r);
          auto gr = g.row(r);
          double dot = 0.0;
          for (std::size_t j = 0; j < pr.size(); ++j) dot += gr[j] * pr[j];
          for (std::size_t j = 0; j < pr.size(); ++j) gr[j] = pr[j] * (gr[j] - dot);
        }
        accumulate(node.operands[0], std::move(g));
        break;
      }
    }
  }

  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it != grads.end()) {
      if (!it->second.all_finite())
        throw NumericError("numeric overflow: gradient of '" + name + "' is not finite");
      result.grads.emplace(name, std::move(it->second));
    } else {
      result.grads.emplace(name, Tensor(value.shape));
    }
  }
  return result;
}

/// p' = p - learning_rate * g, elementwise.
inline ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double learning_rate) {
  ParamSet out = params;
  for (auto& [name, value] : out) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (it->second.shape != value.shape)
      throw ShapeError("gradient for '" + name + "' has shape " + it->second.shape_string() +
                       ", param has " + value.shape_string());
    ops::axpy(-learning_rate, it->second, value);
  }
  return out;
}

/// Largest relative error between analytic gradients and central
/// differences over every param coordinate, with denominator
/// max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const ValidatedGraph& graph, const ParamSet& params,
                         const LabeledBatch& batch, double epsilon = 1e-5) {
  const auto analytic = loss_and_grads(graph, params, batch).grads;
  ParamSet probe = params;
  auto loss_at = [&] { return loss(graph, probe, batch); };

  double worst = 0.0;
  for (auto& [name, tensor] : probe) {
    const Tensor& g = analytic.find(name)->second;
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      const double original = tensor.values[i];
      tensor.values[i] = original + epsilon;
      const double up = loss_at();
      tensor.values[i] = original - epsilon;
      const double down = loss_at();
      tensor.values[i] = original;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = g.values[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace forge
