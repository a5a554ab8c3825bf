#pragma once

// Text form of GraphSpec (".graph" files).
//
//   graph    := "graph" STRING "{" decl* "}"
//   decl     := input | param | node | output | loss
//   input    := "input" IDENT ":" shape ";"
//   param    := "param" IDENT ":" shape "init" "=" ("zeros"|"glorot") ";"
//   node     := "node" IDENT "=" IDENT "(" IDENT ("," IDENT)* ")" ";"
//   output   := "output" IDENT ";"
//   loss     := "loss" "cross_entropy" "(" IDENT ")" ";"
//   shape    := "[" ("?"|INT) ("," INT)* "]"
//
// Whitespace-insensitive; "#" starts a line comment.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "forge/graph.hpp"

namespace forge {

enum class ParseErrorCategory { Lexical, Syntactic, Semantic };

inline constexpr std::string_view category_name(ParseErrorCategory c) {
  switch (c) {
    case ParseErrorCategory::Lexical: return "lexical";
    case ParseErrorCategory::Syntactic: return "syntactic";
    case ParseErrorCategory::Semantic: return "semantic";
  }
  return "?";
}

struct SourcePos {
  int line = 1;
  int column = 1;
  friend bool operator==(const SourcePos&, const SourcePos&) = default;
};

struct ParseError {
  int line = 1;
  int column = 1;
  std::string message;
  ParseErrorCategory category = ParseErrorCategory::Syntactic;
};

struct ParseResult {
  std::optional<GraphSpec> spec;
  std::vector<ParseError> errors;

  bool ok() const { return spec.has_value(); }
  explicit operator bool() const { return ok(); }
};

namespace dsl_detail {

enum class Tok { Ident, String, Int, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // identifier, unescaped string, digits, or the punctuation char
  std::int64_t value = 0;
  SourcePos pos;
};

constexpr std::int64_t kMaxDim = 1'000'000'000;

class Lexer {
 public:
  Lexer(std::string_view src, std::vector<ParseError>& errors) : src_(src), errors_(errors) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.pos = pos_;
      if (at_end()) {
        out.push_back(std::move(t));
        return out;
      }
      const char c = peek();
      if (is_ident_start(c)) {
        while (!at_end() && is_ident_char(peek())) t.text += advance();
        t.kind = Tok::Ident;
      } else if (c >= '0' && c <= '9') {
        bool overflow = false;
        while (!at_end() && peek() >= '0' && peek() <= '9') {
          const char d = advance();
          t.text += d;
          if (!overflow) {
            t.value = t.value * 10 + (d - '0');
            if (t.value > kMaxDim) overflow = true;
          }
        }
        if (overflow) {
          error(t.pos, "integer '" + t.text + "' is too large");
          t.value = kMaxDim;
        }
        t.kind = Tok::Int;
      } else if (c == '"') {
        if (!lex_string(t)) continue;
      } else if (std::string_view("{}()[],;:=?").find(c) != std::string_view::npos) {
        t.kind = Tok::Punct;
        t.text = std::string(1, advance());
      } else {
        advance();
        error(t.pos, "unexpected character " + describe(c));
        continue;
      }
      out.push_back(std::move(t));
    }
  }

 private:
  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

  static std::string describe(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7f) return std::string("'") + c + "'";
    static constexpr char hex[] = "0123456789abcdef";
    return std::string("byte 0x") + hex[u >> 4] + hex[u & 0xf];
  }

  bool lex_string(Token& t) {
    advance();  // opening quote
    for (;;) {
      if (at_end() || peek() == '\n') {
        error(t.pos, "unterminated string literal");
        return false;
      }
      char c = advance();
      if (c == '"') break;
      if (c == '\\') {
        if (at_end()) continue;
        const SourcePos esc = pos_;
        c = advance();
        if (c != '"' && c != '\\') {
          error(esc, "unknown escape sequence \\" + std::string(1, c));
          continue;
        }
      }
      t.text += c;
    }
    t.kind = Tok::String;
    return true;
  }

  void skip_space_and_comments() {
    while (!at_end()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  bool at_end() const { return index_ >= src_.size(); }
  char peek() const { return src_[index_]; }
  char advance() {
    const char c = src_[index_++];
    if (c == '\n') {
      ++pos_.line;
      pos_.column = 1;
    } else {
      ++pos_.column;
    }
    return c;
  }
  void error(SourcePos at, std::string msg) {
    errors_.push_back({at.line, at.column, std::move(msg), ParseErrorCategory::Lexical});
  }

  std::string_view src_;
  std::vector<ParseError>& errors_;
  std::size_t index_ = 0;
  SourcePos pos_;
};

/// Where each declaration and reference sits in the source, used to attach
/// positions to graph validation errors.
struct SourceMap {
  SourcePos graph_keyword;
  SourcePos closing_brace;
  std::map<std::string, SourcePos, std::less<>> declarations;
  std::map<std::string, std::vector<std::pair<std::string, SourcePos>>, std::less<>>
      operand_positions;
  std::optional<SourcePos> output;
  std::optional<SourcePos> loss;
};

class SyntaxError {};

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::vector<ParseError>& errors)
      : tokens_(std::move(tokens)), errors_(errors) {}

  GraphSpec run() {
    GraphSpec spec;
    map_.graph_keyword = cur().pos;
    try {
      expect_keyword("graph");
      spec.name = expect(Tok::String, "graph name string").text;
      expect_punct('{');
    } catch (const SyntaxError&) {
      // Skip to the body, if there is one.
      while (cur().kind != Tok::End && !is_punct('{')) ++index_;
      if (is_punct('{')) ++index_;
    }
    while (cur().kind != Tok::End && !is_punct('}')) {
      const std::size_t start = index_;
      try {
        declaration(spec);
      } catch (const SyntaxError&) {
        resync(start);
      }
    }
    map_.closing_brace = cur().pos;
    if (cur().kind == Tok::End) {
      syntax_error("expected '}' before end of input");
    } else {
      ++index_;
      if (cur().kind != Tok::End) syntax_error("unexpected " + describe(cur()) + " after graph body");
    }
    return spec;
  }

  const SourceMap& source_map() const { return map_; }

 private:
  void declaration(GraphSpec& spec) {
    const Token& head = cur();
    if (head.kind != Tok::Ident) {
      syntax_error("expected a declaration, found " + describe(head));
      throw SyntaxError{};
    }
    if (head.text == "input") {
      ++index_;
      const Token name = expect(Tok::Ident, "input name");
      expect_punct(':');
      Shape shape = parse_shape();
      expect_punct(';');
      if (declare(name)) spec.inputs.push_back({name.text, std::move(shape)});
    } else if (head.text == "param") {
      ++index_;
      const Token name = expect(Tok::Ident, "param name");
      expect_punct(':');
      Shape shape = parse_shape();
      expect_keyword("init");
      expect_punct('=');
      const Token init = expect(Tok::Ident, "'zeros' or 'glorot'");
      Init kind = Init::Zeros;
      if (init.text == "glorot") {
        kind = Init::Glorot;
      } else if (init.text != "zeros") {
        syntax_error_at(init.pos, "expected 'zeros' or 'glorot', found '" + init.text + "'");
        throw SyntaxError{};
      }
      expect_punct(';');
      if (shape.has_batch())
        semantic_error(name.pos, "param '" + name.text + "' cannot use the batch wildcard '?'");
      else if (declare(name))
        spec.params.push_back({name.text, std::move(shape), kind});
    } else if (head.text == "node") {
      ++index_;
      const Token name = expect(Tok::Ident, "node name");
      expect_punct('=');
      const Token op = expect(Tok::Ident, "op name");
      expect_punct('(');
      std::vector<Token> operands;
      operands.push_back(expect(Tok::Ident, "operand name"));
      while (is_punct(',')) {
        ++index_;
        operands.push_back(expect(Tok::Ident, "operand name"));
      }
      expect_punct(')');
      expect_punct(';');
      const auto kind = op_from_name(op.text);
      if (!kind) {
        semantic_error(op.pos, "unknown op '" + op.text +
                                   "' (expected matmul, addbias, relu or softmax)");
        return;
      }
      if (operands.size() != arity(*kind)) {
        semantic_error(op.pos, std::string(op_name(*kind)) + " takes " +
                                   std::to_string(arity(*kind)) + " operand(s), got " +
                                   std::to_string(operands.size()));
        return;
      }
      if (!declare(name)) return;
      NodeDecl node{name.text, *kind, {}};
      auto& positions = map_.operand_positions[name.text];
      for (const auto& o : operands) {
        node.operands.push_back(o.text);
        positions.emplace_back(o.text, o.pos);
      }
      spec.nodes.push_back(std::move(node));
    } else if (head.text == "output") {
      ++index_;
      const Token name = expect(Tok::Ident, "output node name");
      expect_punct(';');
      if (spec.output) {
        semantic_error(head.pos, "duplicate output declaration");
        return;
      }
      spec.output = name.text;
      map_.output = name.pos;
    } else if (head.text == "loss") {
      ++index_;
      expect_keyword("cross_entropy");
      expect_punct('(');
      const Token target = expect(Tok::Ident, "prediction node name");
      expect_punct(')');
      expect_punct(';');
      if (spec.loss) {
        semantic_error(head.pos, "duplicate loss declaration");
        return;
      }
      spec.loss = LossDecl{LossKind::CrossEntropy, target.text};
      map_.loss = target.pos;
    } else {
      syntax_error("unknown declaration '" + head.text +
                   "' (expected input, param, node, output or loss)");
      throw SyntaxError{};
    }
  }

  Shape parse_shape() {
    expect_punct('[');
    Shape shape;
    if (is_punct('?')) {
      ++index_;
      shape.dims.push_back(Shape::kBatch);
    } else {
      shape.dims.push_back(dimension());
    }
    while (is_punct(',')) {
      ++index_;
      shape.dims.push_back(dimension());
    }
    expect_punct(']');
    return shape;
  }

  std::int64_t dimension() {
    const Token t = expect(Tok::Int, "dimension");
    if (t.value < 1) semantic_error(t.pos, "dimension must be at least 1");
    return t.value < 1 ? 1 : t.value;
  }

  bool declare(const Token& name) {
    if (auto [it, inserted] = map_.declarations.emplace(name.text, name.pos); !inserted) {
      semantic_error(name.pos, "duplicate declaration of '" + name.text + "' (first declared at " +
                                   std::to_string(it->second.line) + ":" +
                                   std::to_string(it->second.column) + ")");
      return false;
    }
    return true;
  }

  // Skip to just past the next ';' or up to a '}' / end of input. Always
  // makes progress.
  void resync(std::size_t start) {
    if (index_ == start && cur().kind != Tok::End && !is_punct('}')) ++index_;
    while (cur().kind != Tok::End && !is_punct('}')) {
      if (is_punct(';')) {
        ++index_;
        return;
      }
      ++index_;
    }
  }

  const Token& cur() const { return tokens_[std::min(index_, tokens_.size() - 1)]; }
  bool is_punct(char c) const { return cur().kind == Tok::Punct && cur().text[0] == c; }

  Token expect(Tok kind, std::string_view what) {
    if (cur().kind != kind) {
      syntax_error("expected " + std::string(what) + ", found " + describe(cur()));
      throw SyntaxError{};
    }
    return tokens_[index_++];
  }
  void expect_punct(char c) {
    if (!is_punct(c)) {
      syntax_error(std::string("expected '") + c + "', found " + describe(cur()));
      throw SyntaxError{};
    }
    ++index_;
  }
  void expect_keyword(std::string_view kw) {
    if (cur().kind != Tok::Ident || cur().text != kw) {
      syntax_error("expected '" + std::string(kw) + "', found " + describe(cur()));
      throw SyntaxError{};
    }
    ++index_;
  }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::Ident: return "'" + t.text + "'";
      case Tok::String: return "string \"" + t.text + "\"";
      case Tok::Int: return "number " + t.text;
      case Tok::Punct: return "'" + t.text + "'";
      case Tok::End: return "end of input";
    }
    return "token";
  }

  void syntax_error(std::string msg) { syntax_error_at(cur().pos, std::move(msg)); }
  void syntax_error_at(SourcePos at, std::string msg) {
    errors_.push_back({at.line, at.column, std::move(msg), ParseErrorCategory::Syntactic});
  }
  void semantic_error(SourcePos at, std::string msg) {
    errors_.push_back({at.line, at.column, std::move(msg), ParseErrorCategory::Semantic});
  }

  std::vector<Token> tokens_;
  std::vector<ParseError>& errors_;
  std::size_t index_ = 0;
  SourceMap map_;
};

inline SourcePos locate(const GraphError& e, const SourceMap& map) {
  auto decl = [&](const std::string& name) {
    auto it = map.declarations.find(name);
    return it != map.declarations.end() ? it->second : map.graph_keyword;
  };
  switch (e.kind) {
    case GraphErrorKind::UnresolvedReference: {
      // names = {operand, consumer}
      if (e.names.size() >= 2) {
        if (auto it = map.operand_positions.find(e.names[1]); it != map.operand_positions.end())
          for (const auto& [name, pos] : it->second)
            if (name == e.names[0]) return pos;
        return decl(e.names[1]);
      }
      return map.graph_keyword;
    }
    case GraphErrorKind::MissingOutput:
      return map.output.value_or(map.closing_brace);
    case GraphErrorKind::BadLossTarget:
      return map.loss.value_or(map.closing_brace);
    default:
      return e.names.empty() ? map.graph_keyword : decl(e.names.front());
  }
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace dsl_detail

/// Parses and validates DSL text. Never throws on malformed input; every
/// error carries a 1-based line and column.
inline ParseResult parse(std::string_view text) {
  ParseResult result;
  dsl_detail::Lexer lexer(text, result.errors);
  auto tokens = lexer.run();
  dsl_detail::Parser parser(std::move(tokens), result.errors);
  GraphSpec spec = parser.run();
  if (!result.errors.empty()) {
    std::stable_sort(result.errors.begin(), result.errors.end(), [](const auto& a, const auto& b) {
      return std::tie(a.line, a.column) < std::tie(b.line, b.column);
    });
    return result;
  }

  auto validation = validate(spec);
  if (!validation) {
    for (const auto& e : validation.errors) {
      auto at = dsl_detail::locate(e, parser.source_map());
      result.errors.push_back({at.line, at.column, std::string(error_kind_name(e.kind)) + ": " +
                                                       e.message,
                               ParseErrorCategory::Semantic});
    }
    return result;
  }
  result.spec = std::move(spec);
  return result;
}

/// Canonical DSL text: declarations name-sorted within each section
/// (inputs, params, nodes), one declaration per line, single spaces.
/// Equal specs up to declaration order give identical text.
inline std::string serialize(const GraphSpec& spec) {
  validate(spec).value();

  auto sorted = [](auto items) {
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });
    return items;
  };
  auto shape_text = [](const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.dims.size(); ++i) {
      if (i) out += ", ";
      out += s.dims[i] == Shape::kBatch ? std::string("?") : std::to_string(s.dims[i]);
    }
    return out + "]";
  };

  std::string out = "graph " + dsl_detail::quote(spec.name) + " {\n";
  for (const auto& in : sorted(spec.inputs)) out += "input " + in.name + ": " + shape_text(in.shape) + ";\n";
  for (const auto& p : sorted(spec.params))
    out += "param " + p.name + ": " + shape_text(p.shape) + " init = " +
           std::string(init_name(p.init)) + ";\n";
  for (const auto& n : sorted(spec.nodes)) {
    out += "node " + n.name + " = " + std::string(op_name(n.op)) + "(";
    for (std::size_t i = 0; i < n.operands.size(); ++i) out += (i ? ", " : "") + n.operands[i];
    out += ");\n";
  }
  out += "output " + *spec.output + ";\n";
  out += "loss cross_entropy(" + spec.loss->prediction + ");\n";
  out += "}\n";
  return out;
}

/// Byte form used by every bit measure; identical to serialize().
inline std::string canonical_serialize(const GraphSpec& spec) { return serialize(spec); }

}  // namespace forge
