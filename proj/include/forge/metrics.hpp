#pragma once

// Accuracy and information accuracy.
//
// For a batch of m predictions p_i (probability rows over n classes) and
// one-hot labels y_i:
//
//   e_i     = -Σ_j p_i(j) log2 p_i(j)          prediction entropy, bits
//   a_i     = +1 if argmax p_i is the labelled class, else -1
//   infoacc = (1/m) Σ_i a_i e_i                in [-log2 n, log2 n]
//
// A confident correct prediction contributes little; an unsure wrong one
// costs a lot. argmax ties go to the lowest index, and 0·log 0 is 0.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/batch.hpp"
#include "forge/engine.hpp"
#include "forge/tensor.hpp"

namespace forge {

/// Raised when a metric's input contract is violated.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kProbabilitySumTolerance = 1e-9;

enum class Split { Train, Eval };

inline constexpr std::string_view split_name(Split s) { return s == Split::Train ? "train" : "eval"; }

inline Split split_from_name(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "eval") return Split::Eval;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

struct MetricPoint {
  std::int64_t step = 0;
  Split split = Split::Eval;
  double accuracy = 0.0;
  double infoacc = 0.0;
  std::int64_t batch_size = 0;

  friend bool operator==(const MetricPoint&, const MetricPoint&) = default;
};

/// Probability rows [m, n] with one-hot labels [m, n].
struct PredictionBatch {
  Tensor probs;
  Tensor labels;

  std::size_t size() const { return probs.rows(); }
  std::size_t classes() const { return probs.cols(); }
};

namespace metrics_detail {

inline void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractViolation("probability entry is negative or NaN");
    total += v;
  }
  if (std::abs(total - 1.0) > kProbabilitySumTolerance)
    throw ContractViolation("probabilities sum to " + std::to_string(total) + ", not 1");
}

inline std::size_t hot_index(std::span<const double> y) {
  std::size_t hot = y.size();
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] == 1.0) {
      if (hot != y.size()) throw ContractViolation("label has more than one hot entry");
      hot = j;
    } else if (y[j] != 0.0) {
      throw ContractViolation("label entries must be 0 or 1");
    }
  }
  if (hot == y.size()) throw ContractViolation("label has no hot entry");
  return hot;
}

inline std::size_t argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

}  // namespace metrics_detail

/// Base-2 Shannon entropy, zero entries skipped.
inline double entropy_bits(std::span<const double> p) {
  metrics_detail::check_distribution(p);
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h < 0.0 ? 0.0 : h;
}

/// +1 when argmax(p) (lowest index on ties) is the hot index of y.
inline int prediction_sign(std::span<const double> p, std::span<const double> y) {
  metrics_detail::check_distribution(p);
  if (p.size() != y.size()) throw ContractViolation("prediction and label lengths differ");
  return metrics_detail::argmax(p) == metrics_detail::hot_index(y) ? +1 : -1;
}

inline void check_prediction_batch(const PredictionBatch& b) {
  if (b.probs.rank() != 2 || b.labels.rank() != 2 || b.probs.shape != b.labels.shape)
    throw ContractViolation("probs " + b.probs.shape_string() + " and labels " +
                            b.labels.shape_string() + " must be matrices of equal shape");
  if (b.size() < 1) throw ContractViolation("prediction batch is empty");
}

/// Σ_i a_i e_i, the un-normalized form.
inline double information_accuracy_sum(const PredictionBatch& b) {
  check_prediction_batch(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto p = b.probs.row(i);
    total += prediction_sign(p, b.labels.row(i)) * entropy_bits(p);
  }
  return total;
}

/// (1/m) Σ_i a_i e_i in bits.
inline double information_accuracy(const PredictionBatch& b) {
  return information_accuracy_sum(b) / static_cast<double>(b.size());
}

inline double accuracy(const PredictionBatch& b) {
  check_prediction_batch(b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (prediction_sign(b.probs.row(i), b.labels.row(i)) > 0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(b.size());
}

/// Both metrics for an already computed prediction batch.
inline MetricPoint measure(const PredictionBatch& b, std::int64_t step, Split split) {
  return {step, split, accuracy(b), information_accuracy(b), static_cast<std::int64_t>(b.size())};
}

/// Runs the graph forward on `batch` and scores its output node, which must
/// be a softmax.
inline MetricPoint evaluate(const ValidatedGraph& graph, const ParamSet& params,
                            const LabeledBatch& batch, std::int64_t step, Split split) {
  const NodeDecl* out = graph.find_node(graph.output());
  if (out->op != OpKind::Softmax)
    throw ContractViolation("output node '" + out->name + "' must be a softmax to be scored");
  auto values = forward(graph, params, batch.images);
  PredictionBatch pb{std::move(values.find(out->name)->second), batch.labels};
  return measure(pb, step, split);
}

/// One-decimal bits badge, e.g. "2.6 bits". Halves round away from zero;
/// values that round to zero print as "0.0 bits".
inline std::string chip_rating(double infoacc) {
  double rounded = std::round(infoacc * 10.0) / 10.0;
  if (rounded == 0.0) rounded = 0.0;  // drop the sign of -0
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f bits", rounded);
  return buf;
}

namespace metrics_detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace metrics_detail

inline constexpr std::string_view kCsvHeader = "step,split,batch_size,accuracy,infoacc";

/// Header line plus one row per point, six decimals, input order.
inline std::string export_csv(std::span<const MetricPoint> points) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& p : points) {
    out += std::to_string(p.step) + ',' + std::string(split_name(p.split)) + ',' +
           std::to_string(p.batch_size) + ',' + metrics_detail::fixed6(p.accuracy) + ',' +
           metrics_detail::fixed6(p.infoacc) + '\n';
  }
  return out;
}

/// Reads text produced by export_csv.
inline std::vector<MetricPoint> parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::invalid_argument("metrics CSV must start with '" + std::string(kCsvHeader) + "'");
  std::vector<MetricPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
    if (fields.size() != 5) throw std::invalid_argument("malformed metrics row: " + line);
    points.push_back({std::stoll(fields[0]), split_from_name(fields[1]), std::stod(fields[3]),
                      std::stod(fields[4]), std::stoll(fields[2])});
  }
  return points;
}

}  // namespace forge
