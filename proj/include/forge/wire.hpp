#pragma once

// JSON encodings shared by the HTTP service and the CLI. Field names are
// part of the external contract; numbers keep full double precision.

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

#include "forge/arena.hpp"
#include "forge/complexity.hpp"
#include "forge/dataset_spec.hpp"
#include "forge/dsl.hpp"
#include "forge/engine.hpp"
#include "forge/metrics.hpp"

namespace forge::wire {

using nlohmann::json;

/// A request body that does not match the expected schema.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline json to_json(const MetricPoint& p) {
  return {{"step", p.step},
          {"split", std::string(split_name(p.split))},
          {"accuracy", p.accuracy},
          {"infoacc", p.infoacc},
          {"batch_size", p.batch_size}};
}

inline MetricPoint metric_point_from_json(const json& j) {
  try {
    return {j.at("step").get<std::int64_t>(), split_from_name(j.at("split").get<std::string>()),
            j.at("accuracy").get<double>(), j.at("infoacc").get<double>(),
            j.at("batch_size").get<std::int64_t>()};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("metric point: ") + e.what());
  }
}

inline json to_json(const std::vector<MetricPoint>& points) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back(to_json(p));
  return arr;
}

inline json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
          {"steps", c.steps},               {"seed", c.seed},
          {"eval_interval", c.eval_interval}, {"eval_batch_size", c.eval_batch_size}};
}

/// Missing fields keep their defaults; present ones must have the right type.
inline TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("train_config must be an object");
  TrainConfig c;
  try {
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::int64_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("steps")) c.steps = j.at("steps").get<std::int64_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("eval_interval")) c.eval_interval = j.at("eval_interval").get<std::int64_t>();
    if (j.contains("eval_batch_size")) c.eval_batch_size = j.at("eval_batch_size").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("train_config: ") + e.what());
  }
  if (auto why = c.check(); !why.empty()) throw SchemaError("train_config: " + why);
  return c;
}

/// {"kind": "synthetic", "n_classes", "dim", "m_per_class", "spread", "seed"}
/// or {"kind": "idx", "images", "labels", ["test_images", "test_labels"], "n_classes"}.
inline DatasetSpec dataset_spec_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("dataset must be an object");
  DatasetSpec d;
  try {
    const auto kind = j.value("kind", std::string("synthetic"));
    if (kind == "synthetic") {
      d.kind = DatasetSpec::Kind::Synthetic;
      d.blobs.n_classes = j.value("n_classes", d.blobs.n_classes);
      d.blobs.dim = j.value("dim", d.blobs.dim);
      d.blobs.m_per_class = j.value("m_per_class", d.blobs.m_per_class);
      d.blobs.spread = j.value("spread", d.blobs.spread);
      d.blobs.seed = j.value("seed", d.blobs.seed);
    } else if (kind == "idx") {
      d.kind = DatasetSpec::Kind::Idx;
      d.images = j.at("images").get<std::string>();
      d.labels = j.at("labels").get<std::string>();
      d.test_images = j.value("test_images", std::string());
      d.test_labels = j.value("test_labels", std::string());
      d.n_classes = j.value("n_classes", d.n_classes);
    } else {
      throw SchemaError("dataset kind must be 'synthetic' or 'idx', got '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("dataset: ") + e.what());
  }
  return d;
}

inline json to_json(const Shape& s) {
  json arr = json::array();
  for (auto d : s.dims) {
    if (d == Shape::kBatch) arr.push_back("?");
    else arr.push_back(d);
  }
  return arr;
}

inline json to_json(const ShapeTable& shapes) {
  json out = json::object();
  for (const auto& [name, s] : shapes) out[name] = to_json(s);
  return out;
}

inline json to_json(const ParseError& e) {
  return {{"line", e.line},
          {"col", e.column},
          {"message", e.message},
          {"category", std::string(category_name(e.category))}};
}

inline json to_json(const std::vector<ParseError>& errors) {
  json arr = json::array();
  for (const auto& e : errors) arr.push_back(to_json(e));
  return arr;
}

inline json to_json(const ComplexityReport& r) {
  json pr = json::object();
  for (const auto& [name, v] : r.pagerank) pr[name] = v;
  return {{"description_bits", r.description_bits},
          {"compressed_bits", r.compressed_bits},
          {"node_count", r.node_count},
          {"ncd_to_reference", r.ncd_to_reference ? json(*r.ncd_to_reference) : json(nullptr)},
          {"pagerank", pr},
          {"compressor", r.compressor}};
}

inline json to_json(const Contender& c) {
  return {{"id", c.id}, {"final", to_json(c.final)}, {"curve", to_json(c.curve)}};
}

inline json to_json(const BattleConfig& c) {
  json priority = json::array();
  for (Metric m : c.priority) priority.push_back(std::string(metric_name(m)));
  return {{"train_config", to_json(c.train)}, {"dataset_id", c.dataset_id}, {"priority", priority}};
}

inline json to_json(const BattleResult& r) {
  return {{"a", to_json(r.a)},
          {"b", to_json(r.b)},
          {"winner", std::string(winner_name(r.winner))},
          {"config", to_json(r.config)},
          {"seed", r.seed}};
}

inline std::vector<Metric> priority_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError("priority must be a non-empty array");
  std::vector<Metric> out;
  try {
    for (const auto& m : j) out.push_back(metric_from_name(m.get<std::string>()));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("priority: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return out;
}

}  // namespace forge::wire
