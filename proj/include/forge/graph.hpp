#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge {

/// Tensor shape. A dimension of kBatch is the batch wildcard `?`, allowed
/// only in front.
struct Shape {
  static constexpr std::int64_t kBatch = -1;

  std::vector<std::int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> d) : dims(d) {}
  explicit Shape(std::vector<std::int64_t> d) : dims(std::move(d)) {}

  std::size_t rank() const { return dims.size(); }
  bool has_batch() const { return !dims.empty() && dims.front() == kBatch; }
  std::int64_t operator[](std::size_t i) const { return dims[i]; }

  bool well_formed() const {
    if (dims.empty()) return false;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] == kBatch) {
        if (i != 0) return false;
      } else if (dims[i] < 1) {
        return false;
      }
    }
    return true;
  }

  std::string str() const {
    std::string out = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) out += ", ";
      out += dims[i] == kBatch ? std::string("?") : std::to_string(dims[i]);
    }
    return out + "]";
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class OpKind { MatMul, AddBias, ReLU, Softmax };

inline constexpr std::size_t arity(OpKind op) {
  switch (op) {
    case OpKind::MatMul:
    case OpKind::AddBias:
      return 2;
    case OpKind::ReLU:
    case OpKind::Softmax:
      return 1;
  }
  return 0;
}

inline constexpr std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "addbias";
    case OpKind::ReLU: return "relu";
    case OpKind::Softmax: return "softmax";
  }
  return "?";
}

inline std::optional<OpKind> op_from_name(std::string_view name) {
  for (OpKind op : {OpKind::MatMul, OpKind::AddBias, OpKind::ReLU, OpKind::Softmax})
    if (op_name(op) == name) return op;
  return std::nullopt;
}

enum class Init { Zeros, Glorot };

inline constexpr std::string_view init_name(Init init) {
  return init == Init::Zeros ? "zeros" : "glorot";
}

struct InputDecl {
  std::string name;
  Shape shape;
  friend bool operator==(const InputDecl&, const InputDecl&) = default;
};

struct ParamDecl {
  std::string name;
  Shape shape;
  Init init = Init::Zeros;
  friend bool operator==(const ParamDecl&, const ParamDecl&) = default;
};

struct NodeDecl {
  std::string name;
  OpKind op = OpKind::ReLU;
  std::vector<std::string> operands;
  friend bool operator==(const NodeDecl&, const NodeDecl&) = default;
};

enum class LossKind { CrossEntropy };

struct LossDecl {
  LossKind kind = LossKind::CrossEntropy;
  std::string prediction;
  friend bool operator==(const LossDecl&, const LossDecl&) = default;
};

/// The player-editable graph: declarations only, no values.
struct GraphSpec {
  std::string name;
  std::vector<InputDecl> inputs;
  std::vector<ParamDecl> params;
  std::vector<NodeDecl> nodes;
  std::optional<std::string> output;
  std::optional<LossDecl> loss;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

/// Equality up to reordering of the declaration lists.
inline bool structurally_equal(GraphSpec a, GraphSpec b) {
  auto by_name = [](const auto& x, const auto& y) { return x.name < y.name; };
  for (GraphSpec* g : {&a, &b}) {
    std::sort(g->inputs.begin(), g->inputs.end(), by_name);
    std::sort(g->params.begin(), g->params.end(), by_name);
    std::sort(g->nodes.begin(), g->nodes.end(), by_name);
  }
  return a == b;
}

/// inputs + params + nodes.
inline std::size_t node_count(const GraphSpec& spec) {
  return spec.inputs.size() + spec.params.size() + spec.nodes.size();
}

enum class GraphErrorKind {
  Cycle,
  UnresolvedReference,
  DuplicateName,
  ShapeMismatch,
  MissingOutput,
  BadLossTarget,
};

inline constexpr std::string_view error_kind_name(GraphErrorKind kind) {
  switch (kind) {
    case GraphErrorKind::Cycle: return "cycle";
    case GraphErrorKind::UnresolvedReference: return "unresolved-reference";
    case GraphErrorKind::DuplicateName: return "duplicate-name";
    case GraphErrorKind::ShapeMismatch: return "shape-mismatch";
    case GraphErrorKind::MissingOutput: return "missing-output";
    case GraphErrorKind::BadLossTarget: return "bad-loss-target";
  }
  return "?";
}

struct GraphError {
  GraphErrorKind kind;
  /// Offending names: the unresolved name, the cycle members, the node whose
  /// shapes disagree, etc. The first entry is the declaration to blame.
  std::vector<std::string> names;
  std::string message;
};

/// Thrown by APIs whose precondition is a valid graph.
class InvalidGraph : public std::runtime_error {
 public:
  explicit InvalidGraph(std::vector<GraphError> errors)
      : std::runtime_error(summarize(errors)), errors_(std::move(errors)) {}
  const std::vector<GraphError>& errors() const { return errors_; }

 private:
  static std::string summarize(const std::vector<GraphError>& errors) {
    std::string out = "invalid graph";
    for (const auto& e : errors) out += "; " + e.message;
    return out;
  }
  std::vector<GraphError> errors_;
};

using ShapeTable = std::map<std::string, Shape, std::less<>>;

namespace detail {

/// Shape rule for one node. Returns the result shape or a message.
inline std::variant<Shape, std::string> apply_shape_rule(const NodeDecl& node,
                                                         const std::vector<Shape>& in) {
  auto mismatch = [&](std::string_view why) {
    std::string msg = "node '" + node.name + "' (" + std::string(op_name(node.op)) + "): " +
                      std::string(why) + ";";
    for (std::size_t i = 0; i < in.size(); ++i)
      msg += " " + node.operands[i] + ":" + in[i].str();
    return msg;
  };
  switch (node.op) {
    case OpKind::MatMul: {
      const Shape& a = in[0];
      const Shape& b = in[1];
      if (a.rank() != 2 || b.rank() != 2) return mismatch("matmul needs two rank-2 operands");
      if (b[0] == Shape::kBatch || a[1] != b[0]) return mismatch("inner dimensions differ");
      return Shape{a[0], b[1]};
    }
    case OpKind::AddBias: {
      const Shape& a = in[0];
      const Shape& b = in[1];
      if (a.rank() != 2 || b.rank() != 1) return mismatch("addbias needs a matrix and a vector");
      if (b[0] == Shape::kBatch || a[1] != b[0]) return mismatch("bias length differs from columns");
      return a;
    }
    case OpKind::ReLU:
      return in[0];
    case OpKind::Softmax:
      if (in[0].rank() != 2) return mismatch("softmax needs a rank-2 operand");
      return in[0];
  }
  return mismatch("unknown op");
}

}  // namespace detail

struct ValidationResult;
inline ValidationResult validate(const GraphSpec& spec);

/// A spec that passed validation, with its evaluation order and shapes.
/// Immutable; only validate() constructs one.
class ValidatedGraph {
 public:
  const GraphSpec& spec() const { return spec_; }
  /// Node indices into spec().nodes, operands before consumers.
  const std::vector<std::size_t>& order() const { return order_; }
  /// Shapes of every input, param and node.
  const ShapeTable& shapes() const { return shapes_; }
  const Shape& shape_of(std::string_view name) const { return shapes_.find(name)->second; }

  const NodeDecl* find_node(std::string_view name) const {
    for (const auto& n : spec_.nodes)
      if (n.name == name) return &n;
    return nullptr;
  }
  const std::string& output() const { return *spec_.output; }
  const std::string& loss_target() const { return spec_.loss->prediction; }

 private:
  friend ValidationResult validate(const GraphSpec& spec);
  ValidatedGraph(GraphSpec spec, std::vector<std::size_t> order, ShapeTable shapes)
      : spec_(std::move(spec)), order_(std::move(order)), shapes_(std::move(shapes)) {}

  GraphSpec spec_;
  std::vector<std::size_t> order_;
  ShapeTable shapes_;
};

struct ValidationResult {
  std::optional<ValidatedGraph> graph;
  std::vector<GraphError> errors;

  bool ok() const { return graph.has_value(); }
  explicit operator bool() const { return ok(); }

  /// The graph, or InvalidGraph carrying every error.
  const ValidatedGraph& value() const {
    if (!graph) throw InvalidGraph(errors);
    return *graph;
  }
};

namespace detail {

struct Analysis {
  std::vector<std::size_t> order;
  ShapeTable shapes;
  std::vector<GraphError> errors;
};

/// Names, references, arity, cycles and shapes. Collects every error;
/// shape inference proceeds on whatever part is resolvable and acyclic.
inline Analysis analyze(const GraphSpec& spec) {
  std::vector<GraphError> errors;
  auto report = [&](GraphErrorKind kind, std::vector<std::string> names, std::string msg) {
    errors.push_back({kind, std::move(names), std::move(msg)});
  };

  // Declared names and their roles.
  enum class Role { Input, Param, Node };
  std::map<std::string, Role, std::less<>> roles;
  std::set<std::string, std::less<>> duplicates;
  auto declare = [&](const std::string& name, Role role) {
    if (!roles.emplace(name, role).second && duplicates.insert(name).second)
      report(GraphErrorKind::DuplicateName, {name}, "duplicate name '" + name + "'");
  };
  for (const auto& in : spec.inputs) declare(in.name, Role::Input);
  for (const auto& p : spec.params) declare(p.name, Role::Param);
  for (const auto& n : spec.nodes) declare(n.name, Role::Node);

  ShapeTable shapes;
  for (const auto& in : spec.inputs) {
    if (!in.shape.well_formed())
      report(GraphErrorKind::ShapeMismatch, {in.name},
             "input '" + in.name + "' has malformed shape " + in.shape.str());
    else if (!duplicates.contains(in.name))
      shapes.emplace(in.name, in.shape);
  }
  for (const auto& p : spec.params) {
    if (!p.shape.well_formed() || p.shape.has_batch())
      report(GraphErrorKind::ShapeMismatch, {p.name},
             "param '" + p.name + "' needs fixed positive dimensions, got " + p.shape.str());
    else if (!duplicates.contains(p.name))
      shapes.emplace(p.name, p.shape);
  }

  // Resolve operands and arity; build node-to-node dependency edges.
  std::map<std::string, std::size_t, std::less<>> node_index;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) node_index.emplace(spec.nodes[i].name, i);

  const std::size_t n_nodes = spec.nodes.size();
  std::vector<bool> resolvable(n_nodes, true);
  std::vector<std::vector<std::size_t>> consumers(n_nodes);
  std::vector<std::size_t> pending(n_nodes, 0);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const auto& node = spec.nodes[i];
    if (node.operands.size() != arity(node.op)) {
      report(GraphErrorKind::ShapeMismatch, {node.name},
             "node '" + node.name + "': " + std::string(op_name(node.op)) + " takes " +
                 std::to_string(arity(node.op)) + " operand(s), got " +
                 std::to_string(node.operands.size()));
      resolvable[i] = false;
    }
    for (const auto& operand : node.operands) {
      if (!roles.contains(operand)) {
        report(GraphErrorKind::UnresolvedReference, {operand, node.name},
               "node '" + node.name + "' references undeclared '" + operand + "'");
        resolvable[i] = false;
        continue;
      }
      if (auto it = node_index.find(operand); it != node_index.end()) {
        consumers[it->second].push_back(i);
        ++pending[i];
      }
    }
  }

  // Kahn's algorithm; ties broken by declaration order.
  std::vector<std::size_t> order;
  order.reserve(n_nodes);
  {
    std::vector<std::size_t> remaining = pending;
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n_nodes; ++i)
      if (remaining[i] == 0) ready.insert(i);
    while (!ready.empty()) {
      const std::size_t i = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(i);
      for (std::size_t c : consumers[i])
        if (--remaining[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != n_nodes) {
    // Nodes not ordered lie on a cycle or downstream of one; peel off the
    // downstream part so only cycle members are reported.
    std::vector<bool> stuck(n_nodes, true);
    for (std::size_t i : order) stuck[i] = false;
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (!stuck[i]) continue;
        const bool feeds_stuck = std::any_of(consumers[i].begin(), consumers[i].end(),
                                             [&](std::size_t c) { return stuck[c]; });
        if (!feeds_stuck) {
          stuck[i] = false;
          changed = true;
        }
      }
    }
    std::vector<std::string> members;
    for (std::size_t i = 0; i < n_nodes; ++i)
      if (stuck[i]) members.push_back(spec.nodes[i].name);
    std::sort(members.begin(), members.end());
    std::string msg = "dependency cycle among {";
    for (std::size_t k = 0; k < members.size(); ++k) msg += (k ? ", " : "") + members[k];
    report(GraphErrorKind::Cycle, members, msg + "}");
  }

  // Shape inference along the partial order.
  for (std::size_t i : order) {
    const auto& node = spec.nodes[i];
    if (!resolvable[i] || duplicates.contains(node.name)) continue;
    std::vector<Shape> in;
    bool known = true;
    for (const auto& operand : node.operands) {
      auto it = shapes.find(operand);
      if (it == shapes.end()) {
        known = false;
        break;
      }
      in.push_back(it->second);
    }
    if (!known) continue;
    auto result = detail::apply_shape_rule(node, in);
    if (auto* s = std::get_if<Shape>(&result)) {
      shapes.emplace(node.name, *s);
    } else {
      auto names = std::vector<std::string>{node.name};
      names.insert(names.end(), node.operands.begin(), node.operands.end());
      report(GraphErrorKind::ShapeMismatch, std::move(names), std::get<std::string>(result));
    }
  }

  return {std::move(order), std::move(shapes), std::move(errors)};
}

}  // namespace detail

/// Runs every check and collects all errors rather than stopping at the
/// first.
inline ValidationResult validate(const GraphSpec& spec) {
  auto [order, shapes, errors] = detail::analyze(spec);
  auto report = [&](GraphErrorKind kind, std::vector<std::string> names, std::string msg) {
    errors.push_back({kind, std::move(names), std::move(msg)});
  };
  std::map<std::string, OpKind, std::less<>> node_ops;
  for (const auto& n : spec.nodes) node_ops.emplace(n.name, n.op);

  if (!spec.output) {
    report(GraphErrorKind::MissingOutput, {}, "graph declares no output");
  } else if (!node_ops.contains(*spec.output)) {
    report(GraphErrorKind::MissingOutput, {*spec.output},
           "unresolved output '" + *spec.output + "': no such node");
  }

  if (!spec.loss) {
    report(GraphErrorKind::BadLossTarget, {}, "graph declares no loss");
  } else {
    const auto& target = spec.loss->prediction;
    auto it = node_ops.find(target);
    if (it == node_ops.end()) {
      report(GraphErrorKind::BadLossTarget, {target},
             "loss target '" + target + "' is not a declared node");
    } else if (it->second != OpKind::Softmax) {
      report(GraphErrorKind::BadLossTarget, {target},
             "loss target '" + target + "' must be a softmax node");
    }
  }

  if (!errors.empty()) return {std::nullopt, std::move(errors)};
  return {ValidatedGraph(spec, std::move(order), std::move(shapes)), {}};
}

/// Shapes of every declaration. Throws InvalidGraph if references do not
/// resolve, the graph is cyclic, or any shape rule fails. Output and loss
/// declarations are not required.
inline ShapeTable infer_shapes(const GraphSpec& spec) {
  auto analysis = detail::analyze(spec);
  if (!analysis.errors.empty()) throw InvalidGraph(std::move(analysis.errors));
  return std::move(analysis.shapes);
}

}  // namespace forge
