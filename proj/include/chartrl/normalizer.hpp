#pragma once

// Parses the restricted plotting dialect into a canonical ChartSpec.
//
// The dialect covers literal assignments (numbers, strings, lists, tuples,
// dicts), tuple unpacking, attribute-call chains on the plotting namespaces
// (plt, np, sns, mpf), subplot declarations and keyword arguments. Anything
// else that tokenizes is skipped with a diagnostic. One level of variable
// indirection is resolved for data: a literal bound to a name may be used in
// a plotting call, but a name bound to another name is opaque.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "chartrl/chart_spec.hpp"
#include "chartrl/chart_type.hpp"
#include "chartrl/detail/value.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/lexer.hpp"

namespace chartrl {

enum class DataFormat { flat_ok, nested, non_extractable };

inline std::string_view to_string(DataFormat f) {
  switch (f) {
    case DataFormat::flat_ok: return "flat_ok";
    case DataFormat::nested: return "nested";
    case DataFormat::non_extractable: return "non_extractable";
  }
  return "non_extractable";
}

/// Everything learned from one script: the canonical spec plus the facts the
/// data-format classifier needs.
struct ScriptAnalysis {
  ChartSpec spec;
  bool nested_data = false;
  bool opaque_data_argument = false;
  bool opaque_data_assignment = false;
  bool literal_data_seen = false;
};

namespace detail {

using lex::Token;
using lex::TokenKind;

inline std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

/// Containers count as nested when a dict holds a dict or a list holds any
/// container.
inline bool is_nested(const Value& v) {
  if (v.kind == Value::Kind::dict) {
    for (const auto& it : v.items) {
      if (it.kind == Value::Kind::dict || is_nested(it)) return true;
    }
    return false;
  }
  if (v.kind == Value::Kind::list) {
    for (const auto& it : v.items) {
      if (it.kind == Value::Kind::list || it.kind == Value::Kind::dict) return true;
    }
  }
  return false;
}

struct Binding {
  std::string name;
  Value value;
  bool used_as_data = false;
  bool used_as_style = false;
};

struct RawSeries {
  int axes = 0;
  int call_index = 0;
  int sub_index = 0;
  std::optional<std::string> label;
  std::optional<std::vector<double>> x;
  std::vector<double> y;
  std::string source_call;
};

struct AxesState {
  int grid_rows = 1;
  int grid_cols = 1;
  int row = 0;
  int col = 0;
  Projection projection = Projection::cartesian;
  std::vector<ChartType> types;
  std::optional<std::string> title;
  std::optional<std::string> x_label;
  std::optional<std::string> y_label;
  std::vector<std::string> explicit_legend;
  std::vector<std::string> tick_labels;
};

struct CallArgs {
  std::vector<Value> positional;
  std::vector<std::pair<std::string, Value>> keywords;

  const Value* kw(std::string_view name) const {
    for (const auto& [k, v] : keywords) {
      if (k == name) return &v;
    }
    return nullptr;
  }
  const Value* pos(std::size_t i) const { return i < positional.size() ? &positional[i] : nullptr; }
};

inline bool is_data_keyword(std::string_view k) {
  return k == "x" || k == "y" || k == "height" || k == "width" || k == "data" || k == "left" || k == "bottom" ||
         k == "y1" || k == "y2" || k == "s" || k == "labels" || k == "label";
}

// Calls on plt / axes / figure that neither draw data nor carry text we keep.
inline bool is_ignored_call(std::string_view fn) {
  static const std::set<std::string_view> kIgnored = {
      "show", "savefig", "close", "tight_layout", "grid", "xlim", "ylim", "set_xlim", "set_ylim", "axis",
      "set_axis_off", "set_axis_on", "xscale", "yscale", "set_xscale", "set_yscale", "tick_params", "margins",
      "set_aspect", "axhline", "axvline", "axhspan", "axvspan", "annotate", "text", "figtext", "colorbar",
      "subplots_adjust", "set_facecolor", "set_frame_on", "invert_xaxis", "invert_yaxis", "set_theta_offset",
      "set_theta_direction", "set_rlabel_position", "set_rticks", "set_rmax", "set_rlim", "set_ylim3d",
      "set_zlim", "set_zlabel", "set_zticks", "view_init", "autoscale", "locator_params", "minorticks_on",
      "minorticks_off", "get_cmap", "cm", "rc", "rcdefaults", "style", "use", "setp", "draw", "pause", "ion",
      "ioff", "clf", "cla", "set_size_inches", "set_dpi", "add_patch", "add_artist", "add_collection",
      "set_major_formatter", "set_major_locator", "set_minor_locator", "set_minor_formatter", "set_visible",
      "set_color", "set_linewidth", "set_position", "label_outer", "set_prop_cycle", "hlines", "vlines",
      "table", "arrow", "inset_axes", "secondary_xaxis", "secondary_yaxis", "set_thetagrids", "set_rgrids",
      "set_xmargin", "set_ymargin", "set_box_aspect", "bar_label", "clabel", "set_theme", "set_style",
      "set_palette", "set_context", "despine", "color_palette", "get_legend_handles_labels", "get_xticklabels",
      "get_yticklabels", "get_xlim", "get_ylim", "sca", "rcParams", "suptitle", "supxlabel", "supylabel",
      "set_title_position", "set_xticks_position", "set_label_position", "set_ticks_position",
      "legend_", "get_legend", "relim", "autoscale_view", "set_rorigin", "set_theta_zero_location",
      "set_thetamin", "set_thetamax", "get_xaxis", "get_yaxis", "set_ticklabels", "set_xbound", "set_ybound"};
  return kIgnored.count(fn) > 0;
}

class Interpreter {
 public:
  ScriptAnalysis run(std::string_view source) {
    tokens_ = lex::tokenize(source);
    env_["plt"] = module_binding("plt");
    env_["np"] = module_binding("np");
    env_["sns"] = module_binding("sns");
    env_["mpf"] = module_binding("mpf");
    env_["pd"] = module_binding("pd");
    env_["math"] = module_binding("math");

    std::size_t start = 0;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto k = tokens_[i].kind;
      const bool semicolon = k == TokenKind::op && tokens_[i].text == ";";
      if (k == TokenKind::newline || k == TokenKind::end || semicolon) {
        if (i > start) statement(start, i);
        start = i + 1;
      }
    }
    return finish();
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  std::map<std::string, int> env_;
  std::vector<Binding> bindings_;
  std::vector<AxesState> axes_;
  int current_axes_ = -1;
  int grid_rows_ = 1;
  int grid_cols_ = 1;
  std::vector<RawSeries> series_;
  std::vector<std::string> diagnostics_;
  ScriptAnalysis analysis_;

  struct SkipStatement {
    std::string reason;
  };

  int module_binding(const std::string& name) {
    bindings_.push_back(Binding{name, Value::module(name)});
    return static_cast<int>(bindings_.size()) - 1;
  }

  void diag(const std::string& msg) {
    const int line = pos_ < tokens_.size() ? tokens_[std::min(pos_, tokens_.size() - 1)].line : 0;
    diagnostics_.push_back("line " + std::to_string(line) + ": " + msg);
  }

  // ---- token helpers -----------------------------------------------------

  const Token& peek(std::size_t ahead = 0) const {
    static const Token kEnd{};
    const std::size_t p = pos_ + ahead;
    return p < end_ ? tokens_[p] : kEnd;
  }
  bool at_end() const { return pos_ >= end_; }
  bool peek_op(std::string_view op, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == TokenKind::op && t.text == op && pos_ + ahead < end_;
  }
  bool peek_name(std::string_view name) const {
    return !at_end() && peek().kind == TokenKind::name && peek().text == name;
  }
  bool accept_op(std::string_view op) {
    if (peek_op(op)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) throw SkipStatement{"expected '" + std::string(op) + "'"};
  }

  // Skips to the bracket that closes the one just opened.
  void skip_to_close(std::string_view close) {
    int depth = 1;
    while (!at_end()) {
      const auto& t = peek();
      if (t.kind == TokenKind::op) {
        if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
        if (t.text == ")" || t.text == "]" || t.text == "}") {
          --depth;
          if (depth == 0) {
            if (t.text != close) throw SkipStatement{"bracket mismatch"};
            ++pos_;
            return;
          }
        }
      }
      ++pos_;
    }
    throw SkipStatement{"unterminated bracket in statement"};
  }

  // ---- statements --------------------------------------------------------

  void statement(std::size_t begin, std::size_t end) {
    pos_ = begin;
    end_ = end;
    const Token& first = tokens_[begin];
    try {
      if (first.kind == TokenKind::name) {
        static const std::set<std::string_view> kCompound = {
            "def", "class", "for", "while", "if", "elif", "else", "try", "except", "finally", "with",
            "return", "pass", "break", "continue", "global", "nonlocal", "assert", "del", "raise",
            "yield", "async", "await", "lambda", "print"};
        if (first.text == "import" || first.text == "from") {
          import_statement();
          return;
        }
        if (kCompound.count(first.text) > 0) {
          if (first.text != "pass" && first.text != "print") diag("skipped '" + first.text + "' statement");
          return;
        }
      }

      // Find top-level '=' separators.
      std::vector<std::size_t> eq_positions;
      int depth = 0;
      bool augmented = false;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& t = tokens_[i];
        if (t.kind != TokenKind::op) continue;
        if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
        if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
        if (depth == 0 && t.text == "=") eq_positions.push_back(i);
        if (depth == 0 && t.text.size() >= 2 && t.text.back() == '=' && t.text != "==" && t.text != "!=" &&
            t.text != "<=" && t.text != ">=") {
          augmented = true;
        }
      }
      if (augmented && eq_positions.empty()) {
        for (std::size_t i = begin; i < end; ++i) {
          if (tokens_[i].kind == TokenKind::name) {
            auto it = env_.find(tokens_[i].text);
            if (it != env_.end() && !bindings_[static_cast<std::size_t>(it->second)].value.is_handle()) {
              bind(tokens_[i].text, Value::opaque("augmented assignment"));
            }
            break;
          }
        }
        diag("augmented assignment makes target opaque");
        return;
      }

      if (eq_positions.empty()) {
        pos_ = begin;
        end_ = end;
        Value v = expression();
        if (!at_end()) diag("trailing tokens ignored");
        (void)v;
        return;
      }

      // Evaluate right-hand side.
      pos_ = eq_positions.back() + 1;
      end_ = end;
      Value rhs = expression();
      if (!at_end()) {
        diag("trailing tokens after assignment ignored");
      }
      std::size_t target_begin = begin;
      for (std::size_t eq : eq_positions) {
        assign_targets(target_begin, eq, rhs);
        target_begin = eq + 1;
      }
    } catch (const SkipStatement& s) {
      diag("statement skipped: " + s.reason);
    }
  }

  void import_statement() {
    // import a.b as c, d   |   from a.b import c as d, e
    const bool from = peek().text == "from";
    ++pos_;
    std::string module_path;
    if (from) {
      while (!at_end() && !peek_name("import")) module_path += peek().text, ++pos_;
      if (!peek_name("import")) return;
      ++pos_;
      accept_op("(");
    }
    while (!at_end()) {
      std::string dotted;
      while (!at_end() && (peek().kind == TokenKind::name || peek_op(".") || peek_op("*")) && !peek_name("as")) {
        dotted += peek().text;
        ++pos_;
      }
      std::string alias = dotted.substr(dotted.rfind('.') == std::string::npos ? 0 : dotted.rfind('.') + 1);
      if (peek_name("as")) {
        ++pos_;
        alias = peek().text;
        ++pos_;
      }
      const std::string full = from ? module_path + "." + dotted : dotted;
      std::string canonical;
      if (full == "matplotlib.pyplot" || full == "pylab" || full == "matplotlib.pylab") canonical = "plt";
      if (full == "numpy") canonical = "np";
      if (full == "seaborn") canonical = "sns";
      if (full == "mplfinance") canonical = "mpf";
      if (full == "pandas") canonical = "pd";
      if (full == "math") canonical = "math";
      if (!canonical.empty() && !alias.empty()) {
        env_[alias] = module_binding(canonical);
      } else if (from && !alias.empty() && alias != "*") {
        // Imported free function, e.g. candlestick_ohlc.
        bindings_.push_back(Binding{alias, Value::function(dotted)});
        env_[alias] = static_cast<int>(bindings_.size()) - 1;
      }
      if (!accept_op(",")) break;
    }
  }

  // Target list between [b, e).
  void assign_targets(std::size_t b, std::size_t e, const Value& rhs) {
    pos_ = b;
    end_ = e;
    // Annotated assignment: `x: int = ...`
    if (e - b >= 3 && tokens_[b].kind == TokenKind::name && tokens_[b + 1].kind == TokenKind::op &&
        tokens_[b + 1].text == ":") {
      bind(tokens_[b].text, rhs);
      return;
    }
    Target t = parse_target_list();
    if (!at_end()) {
      diag("unsupported assignment target ignored");
      return;
    }
    destructure(t, rhs);
  }

  struct Target {
    std::string name;             // simple name
    std::vector<Target> children; // tuple target
    bool starred = false;
    bool unsupported = false;
  };

  Target parse_target_list() {
    Target first = parse_target();
    if (!peek_op(",")) return first;
    Target tuple;
    tuple.children.push_back(std::move(first));
    while (accept_op(",")) {
      if (at_end() || peek_op(")") || peek_op("]")) break;
      tuple.children.push_back(parse_target());
    }
    return tuple;
  }

  Target parse_target() {
    if (accept_op("(")) {
      Target t = parse_target_list();
      expect_op(")");
      if (t.children.empty() && !t.name.empty()) return t;
      return t;
    }
    if (accept_op("[")) {
      Target t = parse_target_list();
      expect_op("]");
      return t;
    }
    bool starred = accept_op("*");
    if (peek().kind == TokenKind::name) {
      Target t;
      t.name = peek().text;
      t.starred = starred;
      ++pos_;
      // Subscript/attribute targets (data["k"] = ..., plt.rcParams[...] = ...) are not tracked.
      if (peek_op("[") || peek_op(".")) {
        t.unsupported = true;
        while (!at_end() && !peek_op(",")) {
          if (accept_op("[")) {
            skip_to_close("]");
          } else if (accept_op("(")) {
            skip_to_close(")");
          } else {
            ++pos_;
          }
        }
      }
      return t;
    }
    throw SkipStatement{"unsupported assignment target"};
  }

  void destructure(const Target& t, const Value& rhs) {
    if (t.unsupported) {
      diag("assignment to subscript/attribute '" + t.name + "' ignored");
      return;
    }
    if (t.children.empty()) {
      bind(t.name, rhs);
      return;
    }
    std::vector<Value> parts;
    if (rhs.kind == Value::Kind::list) {
      parts = rhs.items;
      for (auto& p : parts) p.absorb(rhs);
    } else if (rhs.kind == Value::Kind::axes_grid) {
      parts = grid_rows_of(rhs);
    } else {
      for (const auto& c : t.children) destructure(c, Value::opaque("unpacking of opaque value"));
      return;
    }
    if (parts.size() != t.children.size()) {
      diag("unpacking length mismatch");
      for (const auto& c : t.children) destructure(c, Value::opaque("unpacking length mismatch"));
      return;
    }
    for (std::size_t i = 0; i < parts.size(); ++i) destructure(t.children[i], parts[i]);
  }

  void bind(const std::string& name, Value v) {
    if (name.empty() || name == "_") return;
    v.origins.clear();
    bindings_.push_back(Binding{name, std::move(v)});
    env_[name] = static_cast<int>(bindings_.size()) - 1;
  }

  // ---- expressions -------------------------------------------------------

  Value expression() {
    if (peek_name("lambda")) {
      ++pos_;
      while (!at_end() && !peek_op(":")) ++pos_;
      expect_op(":");
      (void)expression();
      return Value::opaque("lambda");
    }
    Value v = or_expr();
    if (peek_name("if")) {
      ++pos_;
      (void)or_expr();
      if (peek_name("else")) {
        ++pos_;
        (void)expression();
      }
      return Value::opaque("conditional expression");
    }
    return v;
  }

  Value or_expr() {
    Value v = and_expr();
    while (peek_name("or")) {
      ++pos_;
      Value r = and_expr();
      v = merge_opaque("boolean expression", v, r);
    }
    return v;
  }

  Value and_expr() {
    Value v = not_expr();
    while (peek_name("and")) {
      ++pos_;
      Value r = not_expr();
      v = merge_opaque("boolean expression", v, r);
    }
    return v;
  }

  Value not_expr() {
    if (peek_name("not")) {
      ++pos_;
      Value v = not_expr();
      return merge_opaque("boolean expression", v, v);
    }
    return comparison();
  }

  Value comparison() {
    Value v = bitwise();
    for (;;) {
      const auto& t = peek();
      const bool cmp_op = t.kind == TokenKind::op &&
                          (t.text == "==" || t.text == "!=" || t.text == "<" || t.text == ">" ||
                           t.text == "<=" || t.text == ">=");
      const bool cmp_kw = t.kind == TokenKind::name && (t.text == "in" || t.text == "is" || t.text == "not");
      if (at_end() || (!cmp_op && !cmp_kw)) return v;
      ++pos_;
      if (peek_name("in") || peek_name("not")) ++pos_;
      Value r = bitwise();
      v = merge_opaque("comparison", v, r);
    }
  }

  Value bitwise() {
    Value v = arith();
    while (peek_op("|") || peek_op("&") || peek_op("^") || peek_op("<<") || peek_op(">>")) {
      ++pos_;
      Value r = arith();
      v = merge_opaque("bitwise expression", v, r);
    }
    return v;
  }

  Value arith() {
    Value v = term();
    while (peek_op("+") || peek_op("-")) {
      const std::string op = peek().text;
      ++pos_;
      Value r = term();
      v = binary(op, v, r);
    }
    return v;
  }

  Value term() {
    Value v = unary();
    while (peek_op("*") || peek_op("/") || peek_op("//") || peek_op("%") || peek_op("@")) {
      const std::string op = peek().text;
      ++pos_;
      Value r = unary();
      v = binary(op, v, r);
    }
    return v;
  }

  Value unary() {
    if (peek_op("-") || peek_op("+") || peek_op("~")) {
      const std::string op = peek().text;
      ++pos_;
      Value v = unary();
      if (v.kind == Value::Kind::number && op != "~") {
        if (op == "-") v.number = -v.number;
        return v;
      }
      return merge_opaque("unary expression", v, v);
    }
    return power();
  }

  Value power() {
    Value v = postfix();
    if (accept_op("**")) {
      Value r = unary();
      return binary("**", v, r);
    }
    return v;
  }

  static Value merge_opaque(const std::string& why, const Value& a, const Value& b) {
    Value v = Value::opaque(why);
    v.absorb(a);
    v.absorb(b);
    return v;
  }

  static Value binary(const std::string& op, const Value& a, const Value& b) {
    if (a.kind == Value::Kind::number && b.kind == Value::Kind::number) {
      double r = 0.0;
      if (op == "+") r = a.number + b.number;
      else if (op == "-") r = a.number - b.number;
      else if (op == "*") r = a.number * b.number;
      else if (op == "/") r = a.number / b.number;
      else if (op == "//") r = std::floor(a.number / b.number);
      else if (op == "%") r = a.number - b.number * std::floor(a.number / b.number);
      else if (op == "**") r = std::pow(a.number, b.number);
      else return merge_opaque("arithmetic", a, b);
      Value v = Value::num(r);
      v.absorb(a);
      v.absorb(b);
      return v;
    }
    if (op == "+" && a.kind == Value::Kind::string && b.kind == Value::Kind::string) {
      Value v = Value::str(a.text + b.text);
      v.absorb(a);
      v.absorb(b);
      return v;
    }
    if (op == "+" && a.kind == Value::Kind::list && b.kind == Value::Kind::list) {
      std::vector<Value> items = a.items;
      items.insert(items.end(), b.items.begin(), b.items.end());
      Value v = Value::list(std::move(items));
      v.absorb(a);
      v.absorb(b);
      return v;
    }
    return merge_opaque("arithmetic on non-literal", a, b);
  }

  Value postfix() {
    Value v = atom();
    for (;;) {
      if (peek_op(".")) {
        ++pos_;
        if (peek().kind != TokenKind::name) throw SkipStatement{"expected attribute name"};
        const std::string attr = peek().text;
        ++pos_;
        if (peek_op("(")) {
          ++pos_;
          CallArgs args = call_arguments();
          v = method_call(v, attr, args);
        } else {
          v = attribute(v, attr);
        }
      } else if (peek_op("(")) {
        ++pos_;
        CallArgs args = call_arguments();
        v = free_call(v, args);
      } else if (peek_op("[")) {
        ++pos_;
        v = subscript(v);
      } else {
        return v;
      }
    }
  }

  CallArgs call_arguments() {
    CallArgs args;
    while (!accept_op(")")) {
      if (at_end()) throw SkipStatement{"unterminated call"};
      if (accept_op("**")) {
        Value v = expression();
        if (v.kind == Value::Kind::dict) {
          for (std::size_t i = 0; i < v.keys.size(); ++i) args.keywords.emplace_back(v.keys[i], v.items[i]);
        }
      } else if (accept_op("*")) {
        Value v = expression();
        if (v.kind == Value::Kind::list) {
          for (auto item : v.items) {
            item.absorb(v);
            args.positional.push_back(std::move(item));
          }
        } else {
          args.positional.push_back(Value::opaque("starred argument"));
        }
      } else if (peek().kind == TokenKind::name && peek_op("=", 1)) {
        std::string key = peek().text;
        pos_ += 2;
        args.keywords.emplace_back(std::move(key), expression());
      } else {
        Value v = expression();
        if (peek_name("for")) {
          skip_to_close(")");
          args.positional.push_back(Value::opaque("generator expression"));
          return args;
        }
        args.positional.push_back(std::move(v));
      }
      if (!accept_op(",")) {
        expect_op(")");
        break;
      }
    }
    return args;
  }

  Value atom() {
    if (at_end()) throw SkipStatement{"unexpected end of statement"};
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::number: {
        ++pos_;
        if (t.imaginary) return Value::opaque("complex literal");
        return Value::num(t.number);
      }
      case TokenKind::string: {
        std::string s = t.text;
        ++pos_;
        while (!at_end() && peek().kind == TokenKind::string) {
          s += peek().text;
          ++pos_;
        }
        return Value::str(std::move(s));
      }
      case TokenKind::name: {
        const std::string name = t.text;
        ++pos_;
        if (name == "True") return Value::boolean(true);
        if (name == "False") return Value::boolean(false);
        if (name == "None") return Value::none();
        return lookup(name);
      }
      case TokenKind::op: {
        if (t.text == "(") {
          ++pos_;
          if (accept_op(")")) return Value::list({}, true);
          Value first = expression();
          if (peek_name("for")) {
            skip_to_close(")");
            return Value::opaque("generator expression");
          }
          if (accept_op(")")) return first;
          std::vector<Value> items{std::move(first)};
          while (accept_op(",")) {
            if (peek_op(")")) break;
            items.push_back(expression());
          }
          expect_op(")");
          return Value::list(std::move(items), true);
        }
        if (t.text == "[") {
          ++pos_;
          std::vector<Value> items;
          while (!accept_op("]")) {
            items.push_back(expression());
            if (peek_name("for")) {
              skip_to_close("]");
              return Value::opaque("list comprehension");
            }
            if (!accept_op(",")) {
              expect_op("]");
              break;
            }
          }
          return Value::list(std::move(items));
        }
        if (t.text == "{") {
          ++pos_;
          std::vector<std::pair<std::string, Value>> entries;
          std::vector<Value> set_items;
          while (!accept_op("}")) {
            Value key = expression();
            if (peek_name("for")) {
              skip_to_close("}");
              return Value::opaque("comprehension");
            }
            if (accept_op(":")) {
              Value val = expression();
              if (peek_name("for")) {
                skip_to_close("}");
                return Value::opaque("dict comprehension");
              }
              std::string k;
              if (key.kind == Value::Kind::string) {
                k = key.text;
              } else if (key.kind == Value::Kind::number) {
                k = format_number(key.number);
              } else {
                return skip_rest_of_braces("non-literal dict key");
              }
              entries.emplace_back(std::move(k), std::move(val));
            } else {
              set_items.push_back(std::move(key));
            }
            if (!accept_op(",")) {
              expect_op("}");
              break;
            }
          }
          if (!set_items.empty()) return Value::opaque("set literal");
          return Value::dict(std::move(entries));
        }
        if (t.text == "...") {
          ++pos_;
          return Value::opaque("ellipsis");
        }
        break;
      }
      default: break;
    }
    throw SkipStatement{"unexpected token '" + t.text + "'"};
  }

  Value skip_rest_of_braces(const std::string& why) {
    skip_to_close("}");
    return Value::opaque(why);
  }

  Value lookup(const std::string& name) {
    auto it = env_.find(name);
    if (it == env_.end()) {
      Value v = Value::opaque("unbound name");
      return v;
    }
    const int id = it->second;
    Value v = bindings_[static_cast<std::size_t>(id)].value;
    if (!v.is_handle()) {
      v.hops += 1;
      v.origins = {id};
    }
    return v;
  }

  Value attribute(const Value& base, const std::string& attr) {
    if (base.kind == Value::Kind::module) {
      if (base.text == "np" && (attr == "nan" || attr == "inf" || attr == "pi" || attr == "e")) {
        if (attr == "pi") return Value::num(3.141592653589793);
        if (attr == "e") return Value::num(2.718281828459045);
        return Value::num(attr == "nan" ? std::nan("") : HUGE_VAL);
      }
      if (base.text == "math" && attr == "pi") return Value::num(3.141592653589793);
      Value v = Value::module(base.text + "." + attr);
      return v;
    }
    if (base.kind == Value::Kind::axes_grid && attr == "flat") return flatten_grid(base);
    if (base.kind == Value::Kind::list && attr == "T") return Value::opaque("transpose");
    if (base.kind == Value::Kind::axes || base.kind == Value::Kind::figure) {
      Value v = Value::opaque("attribute " + attr);
      return v;
    }
    Value v = Value::opaque("attribute " + attr);
    v.absorb(base);
    return v;
  }

  Value subscript(const Value& base) {
    // Parse index expression(s), including slices.
    std::vector<Value> indices;
    std::vector<std::optional<std::pair<std::optional<long>, std::optional<long>>>> slices;
    while (!accept_op("]")) {
      std::optional<Value> lo;
      if (!peek_op(":")) lo = expression();
      if (accept_op(":")) {
        std::optional<Value> hi;
        if (!peek_op("]") && !peek_op(",") && !peek_op(":")) hi = expression();
        if (accept_op(":")) {
          if (!peek_op("]") && !peek_op(",")) (void)expression();
          return finish_subscript_opaque(base, "stepped slice");
        }
        auto as_int = [](const std::optional<Value>& v) -> std::optional<long> {
          if (v && v->kind == Value::Kind::number) return static_cast<long>(v->number);
          return std::nullopt;
        };
        if ((lo && lo->kind != Value::Kind::number) || (hi && hi->kind != Value::Kind::number)) {
          return finish_subscript_opaque(base, "non-literal slice");
        }
        slices.emplace_back(std::make_pair(as_int(lo), as_int(hi)));
        indices.push_back(Value::none());
      } else {
        slices.emplace_back(std::nullopt);
        indices.push_back(lo ? *lo : Value::none());
      }
      if (!accept_op(",")) {
        expect_op("]");
        break;
      }
    }

    Value cur = base;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      cur = index_once(cur, indices[k], slices[k], k);
    }
    return cur;
  }

  Value finish_subscript_opaque(const Value& base, const std::string& why) {
    skip_to_close("]");
    Value v = Value::opaque(why);
    v.absorb(base);
    return v;
  }

  Value index_once(const Value& base, const Value& index,
                   const std::optional<std::pair<std::optional<long>, std::optional<long>>>& slice, std::size_t dim) {
    if (base.kind == Value::Kind::axes_grid) {
      const bool two_d = base.grid_rows > 1 && base.grid_cols > 1;
      if (slice) return Value::opaque("sliced axes grid");
      if (index.kind != Value::Kind::number) return Value::opaque("non-literal axes index");
      long i = static_cast<long>(index.number);
      if (two_d && dim == 0) {
        auto rows = grid_rows_of(base);
        if (i < 0) i += static_cast<long>(rows.size());
        if (i < 0 || i >= static_cast<long>(rows.size())) return Value::opaque("axes index out of range");
        return rows[static_cast<std::size_t>(i)];
      }
      const long n = static_cast<long>(base.items.size());
      if (i < 0) i += n;
      if (i < 0 || i >= n) return Value::opaque("axes index out of range");
      return base.items[static_cast<std::size_t>(i)];
    }
    if (base.kind == Value::Kind::list) {
      const long n = static_cast<long>(base.items.size());
      if (slice) {
        long lo = slice->first.value_or(0);
        long hi = slice->second.value_or(n);
        if (lo < 0) lo += n;
        if (hi < 0) hi += n;
        lo = std::clamp(lo, 0L, n);
        hi = std::clamp(hi, lo, n);
        std::vector<Value> items(base.items.begin() + lo, base.items.begin() + hi);
        Value v = Value::list(std::move(items), base.is_tuple);
        v.absorb(base);
        return v;
      }
      if (index.kind != Value::Kind::number) return merge_opaque("non-literal index", base, index);
      long i = static_cast<long>(index.number);
      if (i < 0) i += n;
      if (i < 0 || i >= n) return merge_opaque("index out of range", base, index);
      Value v = base.items[static_cast<std::size_t>(i)];
      v.absorb(base);
      return v;
    }
    if (base.kind == Value::Kind::dict) {
      std::string key;
      if (index.kind == Value::Kind::string) {
        key = index.text;
      } else if (index.kind == Value::Kind::number) {
        key = format_number(index.number);
      } else {
        return merge_opaque("non-literal key", base, index);
      }
      for (std::size_t i = 0; i < base.keys.size(); ++i) {
        if (base.keys[i] == key) {
          Value v = base.items[i];
          v.absorb(base);
          return v;
        }
      }
      return merge_opaque("missing key", base, index);
    }
    return merge_opaque("subscript of opaque value", base, index);
  }

  // ---- axes & figure management -------------------------------------------

  std::vector<Value> grid_rows_of(const Value& grid) {
    std::vector<Value> rows;
    const bool two_d = grid.grid_rows > 1 && grid.grid_cols > 1;
    if (!two_d) return grid.items;
    for (int r = 0; r < grid.grid_rows; ++r) {
      Value row;
      row.kind = Value::Kind::axes_grid;
      row.grid_rows = 1;
      row.grid_cols = grid.grid_cols;
      for (int c = 0; c < grid.grid_cols; ++c) {
        row.items.push_back(grid.items[static_cast<std::size_t>(r * grid.grid_cols + c)]);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  static Value flatten_grid(const Value& grid) {
    Value v = grid;
    v.grid_rows = 1;
    v.grid_cols = static_cast<int>(grid.items.size());
    return v;
  }

  void reset_figure(int rows, int cols) {
    if (!axes_.empty()) {
      bool populated = false;
      for (const auto& a : axes_) {
        if (!a.types.empty() || a.title || a.x_label || a.y_label) populated = true;
      }
      if (populated) diag("new figure declaration discards earlier figure content");
    }
    axes_.clear();
    series_.clear();
    current_axes_ = -1;
    grid_rows_ = std::max(1, rows);
    grid_cols_ = std::max(1, cols);
  }

  static Projection projection_from(const CallArgs& args) {
    const Value* p = args.kw("projection");
    if (const Value* sk = args.kw("subplot_kw"); sk && sk->kind == Value::Kind::dict) {
      for (std::size_t i = 0; i < sk->keys.size(); ++i) {
        if (sk->keys[i] == "projection") p = &sk->items[i];
      }
    }
    if (const Value* polar = args.kw("polar"); polar && polar->kind == Value::Kind::boolean && polar->number != 0) {
      return Projection::polar;
    }
    if (p && p->kind == Value::Kind::string) {
      if (p->text == "polar") return Projection::polar;
      if (p->text == "3d") return Projection::three_d;
    }
    return Projection::cartesian;
  }

  int axes_at(int rows, int cols, int row, int col, Projection proj) {
    grid_rows_ = std::max(grid_rows_, rows);
    grid_cols_ = std::max(grid_cols_, cols);
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      if (axes_[i].row == row && axes_[i].col == col) {
        if (proj != Projection::cartesian) axes_[i].projection = proj;
        return static_cast<int>(i);
      }
    }
    AxesState a;
    a.grid_rows = rows;
    a.grid_cols = cols;
    a.row = row;
    a.col = col;
    a.projection = proj;
    axes_.push_back(std::move(a));
    return static_cast<int>(axes_.size()) - 1;
  }

  int current_axes() {
    if (current_axes_ < 0) current_axes_ = axes_at(1, 1, 0, 0, Projection::cartesian);
    return current_axes_;
  }

  Value make_subplots(const CallArgs& args) {
    int rows = 1;
    int cols = 1;
    if (const Value* v = args.pos(0); v && v->kind == Value::Kind::number) rows = static_cast<int>(v->number);
    if (const Value* v = args.pos(1); v && v->kind == Value::Kind::number) cols = static_cast<int>(v->number);
    if (const Value* v = args.kw("nrows"); v && v->kind == Value::Kind::number) rows = static_cast<int>(v->number);
    if (const Value* v = args.kw("ncols"); v && v->kind == Value::Kind::number) cols = static_cast<int>(v->number);
    rows = std::clamp(rows, 1, 64);
    cols = std::clamp(cols, 1, 64);
    reset_figure(rows, cols);
    const Projection proj = projection_from(args);
    Value grid;
    grid.kind = Value::Kind::axes_grid;
    grid.grid_rows = rows;
    grid.grid_cols = cols;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) grid.items.push_back(Value::axes_ref(axes_at(rows, cols, r, c, proj)));
    }
    current_axes_ = grid.items.front().axes;
    bool squeeze = true;
    if (const Value* s = args.kw("squeeze"); s && s->kind == Value::Kind::boolean) squeeze = s->number != 0;
    if (rows == 1 && cols == 1 && squeeze) return grid.items.front();
    return grid;
  }

  Value make_subplot(const CallArgs& args) {
    int rows = 1;
    int cols = 1;
    int index = 1;
    if (args.positional.size() == 1 && args.positional[0].kind == Value::Kind::number) {
      const int code = static_cast<int>(args.positional[0].number);
      rows = code / 100;
      cols = (code / 10) % 10;
      index = code % 10;
    } else if (args.positional.size() >= 3) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (args.positional[i].kind != Value::Kind::number) return Value::opaque("non-literal subplot spec");
      }
      rows = static_cast<int>(args.positional[0].number);
      cols = static_cast<int>(args.positional[1].number);
      index = static_cast<int>(args.positional[2].number);
    }
    rows = std::clamp(rows, 1, 64);
    cols = std::clamp(cols, 1, 64);
    index = std::clamp(index, 1, rows * cols);
    const int row = (index - 1) / cols;
    const int col = (index - 1) % cols;
    current_axes_ = axes_at(rows, cols, row, col, projection_from(args));
    return Value::axes_ref(current_axes_);
  }

  // ---- calls -------------------------------------------------------------

  Value method_call(const Value& recv, const std::string& fn, const CallArgs& args) {
    switch (recv.kind) {
      case Value::Kind::module: return module_call(recv.text, fn, args);
      case Value::Kind::axes: return axes_call(recv.axes, fn, args, false);
      case Value::Kind::figure: return figure_call(fn, args);
      case Value::Kind::axes_grid:
        if (fn == "flatten" || fn == "ravel") return flatten_grid(recv);
        if (fn == "tolist") return recv;
        return Value::opaque("axes grid method");
      case Value::Kind::dict: {
        Value v;
        if (fn == "keys") {
          std::vector<Value> items;
          for (const auto& k : recv.keys) items.push_back(Value::str(k));
          v = Value::list(std::move(items));
        } else if (fn == "values") {
          v = Value::list(recv.items);
        } else if (fn == "get" && !args.positional.empty()) {
          return index_once(recv, args.positional[0], std::nullopt, 0);
        } else {
          v = Value::opaque("dict method " + fn);
        }
        v.absorb(recv);
        return v;
      }
      case Value::Kind::list:
        if (fn == "tolist" || fn == "copy") return recv;
        return merge_opaque("list method " + fn, recv, recv);
      default: break;
    }
    Value v = Value::opaque("call on opaque value");
    v.absorb(recv);
    for (const auto& a : args.positional) v.absorb(a);
    return v;
  }

  Value free_call(const Value& callee, const CallArgs& args) {
    if (callee.kind == Value::Kind::function) {
      const std::string& fn = callee.text;
      if (fn.find("candlestick") != std::string::npos) {
        int target = -1;
        if (const Value* a = args.pos(0); a && a->kind == Value::Kind::axes) target = a->axes;
        if (target < 0) target = current_axes();
        CallArgs rest = args;
        if (!rest.positional.empty()) rest.positional.erase(rest.positional.begin());
        record_plot(target, "candlestick_ohlc", rest);
        return Value::opaque("candlestick artists");
      }
      return Value::opaque("call:" + fn);
    }
    // Builtins arrive as unbound names, i.e. opaque values; re-derive the name
    // from the token stream.
    const std::string name = callee_name_before_call();
    if (name == "range" || name == "list" || name == "tuple" || name == "len" || name == "float" ||
        name == "int" || name == "round" || name == "abs" || name == "dict" || name == "sum" ||
        name == "max" || name == "min") {
      if (env_.count(name) == 0) return builtin_call(name, args);
    }
    Value v = Value::opaque("call:" + name);
    for (const auto& a : args.positional) v.absorb(a);
    for (const auto& kw : args.keywords) v.absorb(kw.second);
    return v;
  }

  std::string callee_name_before_call() const {
    // pos_ is just past the closing ')'. Walk back to the matching '(' and
    // return the name token before it.
    int depth = 0;
    for (std::size_t i = pos_; i-- > 0;) {
      const auto& t = tokens_[i];
      if (t.kind == TokenKind::op && (t.text == ")" || t.text == "]" || t.text == "}")) ++depth;
      if (t.kind == TokenKind::op && (t.text == "(" || t.text == "[" || t.text == "{")) {
        --depth;
        if (depth == 0) {
          if (i > 0 && tokens_[i - 1].kind == TokenKind::name) return tokens_[i - 1].text;
          return "";
        }
      }
    }
    return "";
  }

  Value builtin_call(const std::string& name, const CallArgs& args) {
    const Value* a0 = args.pos(0);
    if (name == "range") {
      std::vector<double> p;
      for (const auto& a : args.positional) {
        if (a.kind != Value::Kind::number) return merge_all("range over non-literal", args);
        p.push_back(a.number);
      }
      if (p.empty() || p.size() > 3) return merge_all("range arity", args);
      const double start = p.size() >= 2 ? p[0] : 0.0;
      const double stop = p.size() >= 2 ? p[1] : p[0];
      const double step = p.size() == 3 ? p[2] : 1.0;
      return arithmetic_sequence(start, stop, step, args);
    }
    if ((name == "list" || name == "tuple") && a0) {
      if (a0->kind == Value::Kind::list) {
        Value v = *a0;
        v.is_tuple = name == "tuple";
        return v;
      }
      if (a0->kind == Value::Kind::dict) {
        std::vector<Value> items;
        for (const auto& k : a0->keys) items.push_back(Value::str(k));
        Value v = Value::list(std::move(items));
        v.absorb(*a0);
        return v;
      }
      return merge_all(name + " of opaque value", args);
    }
    if (name == "len" && a0 && (a0->kind == Value::Kind::list || a0->kind == Value::Kind::dict)) {
      Value v = Value::num(static_cast<double>(a0->items.size()));
      v.absorb(*a0);
      return v;
    }
    if ((name == "float" || name == "int" || name == "abs" || name == "round") && a0 &&
        a0->kind == Value::Kind::number) {
      Value v = *a0;
      if (name == "int") v.number = std::trunc(v.number);
      if (name == "abs") v.number = std::fabs(v.number);
      if (name == "round") v.number = std::nearbyint(v.number);
      return v;
    }
    if (name == "float" && a0 && a0->kind == Value::Kind::string) {
      if (a0->text == "nan") return Value::num(std::nan(""));
      if (a0->text == "inf") return Value::num(HUGE_VAL);
    }
    if (name == "dict" && args.positional.empty()) {
      std::vector<std::pair<std::string, Value>> entries(args.keywords.begin(), args.keywords.end());
      return Value::dict(std::move(entries));
    }
    return merge_all(name + " call", args);
  }

  static Value merge_all(const std::string& why, const CallArgs& args) {
    Value v = Value::opaque(why);
    for (const auto& a : args.positional) v.absorb(a);
    for (const auto& kw : args.keywords) v.absorb(kw.second);
    return v;
  }

  static Value arithmetic_sequence(double start, double stop, double step, const CallArgs& args) {
    if (step == 0.0) return merge_all("zero step", args);
    const double n = std::ceil((stop - start) / step);
    if (!(n >= 0) || n > 100000) return merge_all("sequence too long", args);
    std::vector<Value> items;
    for (long i = 0; i < static_cast<long>(n); ++i) items.push_back(Value::num(start + static_cast<double>(i) * step));
    Value v = Value::list(std::move(items));
    for (const auto& a : args.positional) v.absorb(a);
    return v;
  }

  Value numpy_call(const std::string& fn, const CallArgs& args) {
    const Value* a0 = args.pos(0);
    if ((fn == "array" || fn == "asarray") && a0) {
      Value v = *a0;
      v.is_tuple = false;
      return v;
    }
    if (fn == "arange") {
      std::vector<double> p;
      for (const auto& a : args.positional) {
        if (a.kind != Value::Kind::number) return merge_all("arange over non-literal", args);
        p.push_back(a.number);
      }
      if (p.empty() || p.size() > 3) return merge_all("arange arity", args);
      const double start = p.size() >= 2 ? p[0] : 0.0;
      const double stop = p.size() >= 2 ? p[1] : p[0];
      const double step = p.size() == 3 ? p[2] : 1.0;
      return arithmetic_sequence(start, stop, step, args);
    }
    if (fn == "linspace") {
      const Value* a1 = args.pos(1);
      const Value* a2 = args.pos(2) ? args.pos(2) : args.kw("num");
      if (!a0 || !a1 || a0->kind != Value::Kind::number || a1->kind != Value::Kind::number) {
        return merge_all("linspace over non-literal", args);
      }
      const long n = a2 && a2->kind == Value::Kind::number ? static_cast<long>(a2->number) : 50;
      if (n < 0 || n > 100000) return merge_all("linspace size", args);
      std::vector<Value> items;
      for (long i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        items.push_back(Value::num(n == 1 ? a0->number : a0->number + (a1->number - a0->number) * t));
      }
      if (n > 1) items.back() = Value::num(a1->number);
      Value v = Value::list(std::move(items));
      for (const auto& a : args.positional) v.absorb(a);
      return v;
    }
    if ((fn == "zeros" || fn == "ones") && a0 && a0->kind == Value::Kind::number) {
      const long n = static_cast<long>(a0->number);
      if (n < 0 || n > 100000) return merge_all("array size", args);
      std::vector<Value> items(static_cast<std::size_t>(n), Value::num(fn == "ones" ? 1.0 : 0.0));
      Value v = Value::list(std::move(items));
      v.absorb(*a0);
      return v;
    }
    return merge_all("call:np." + fn, args);
  }

  Value module_call(const std::string& module, const std::string& fn, const CallArgs& args) {
    if (module == "np") return numpy_call(fn, args);
    if (module.rfind("np.", 0) == 0) return merge_all("call:" + module + "." + fn, args);
    if (module == "plt") return pyplot_call(fn, args);
    if (module == "sns") return seaborn_call(fn, args);
    if (module == "mpf") {
      if (fn == "plot") {
        CallArgs rest = args;
        const Value* type = args.kw("type");
        const std::string call = type && type->kind == Value::Kind::string &&
                                         (type->text == "candle" || type->text == "ohlc")
                                     ? "candlestick_ohlc"
                                     : "mpf_plot";
        if (!rest.positional.empty()) rest.positional.clear();
        record_plot(current_axes(), call, rest);
        return Value::opaque("mpf figure");
      }
      return merge_all("call:mpf." + fn, args);
    }
    if (module == "math" && args.pos(0) && args.pos(0)->kind == Value::Kind::number) {
      const double x = args.pos(0)->number;
      if (fn == "sqrt") return Value::num(std::sqrt(x));
      if (fn == "log") return Value::num(std::log(x));
      if (fn == "exp") return Value::num(std::exp(x));
    }
    return merge_all("call:" + module + "." + fn, args);
  }

  Value pyplot_call(const std::string& fn, const CallArgs& args) {
    if (fn == "subplots") {
      Value axes = make_subplots(args);
      return Value::list({Value::figure(), axes}, true);
    }
    if (fn == "subplot") return make_subplot(args);
    if (fn == "figure" || fn == "gcf") return Value::figure();
    if (fn == "gca") return Value::axes_ref(current_axes());
    if (fn == "axes") {
      current_axes_ = axes_at(1, 1, 0, 0, projection_from(args));
      return Value::axes_ref(current_axes_);
    }
    if (fn == "polar") {
      const int a = current_axes();
      axes_[static_cast<std::size_t>(a)].projection = Projection::polar;
      record_plot(a, "polar", args);
      return Value::opaque("artists");
    }
    static const std::map<std::string, std::string> kAxesAlias = {
        {"title", "set_title"},   {"xlabel", "set_xlabel"},  {"ylabel", "set_ylabel"},
        {"xticks", "set_xticks"}, {"yticks", "set_yticks"},  {"legend", "legend"}};
    if (auto it = kAxesAlias.find(fn); it != kAxesAlias.end()) {
      return axes_call(current_axes(), it->second, args, true);
    }
    return axes_call(current_axes_ >= 0 ? current_axes_ : -1, fn, args, true);
  }

  Value figure_call(const std::string& fn, const CallArgs& args) {
    if (fn == "add_subplot") return make_subplot(args);
    if (fn == "subplots") return make_subplots(args);
    if (fn == "gca") return Value::axes_ref(current_axes());
    if (fn == "add_axes") {
      diag("add_axes inset ignored");
      return Value::opaque("inset axes");
    }
    return Value::opaque("figure method " + fn);
  }

  Value seaborn_call(const std::string& fn, const CallArgs& args) {
    static const std::map<std::string, std::string> kSeaborn = {
        {"barplot", "bar"},      {"lineplot", "plot"},       {"scatterplot", "scatter"},
        {"histplot", "hist"},    {"boxplot", "boxplot"},     {"violinplot", "violinplot"},
        {"heatmap", "heatmap"},  {"kdeplot", "kdeplot"},     {"countplot", "countplot"}};
    auto it = kSeaborn.find(fn);
    if (it == kSeaborn.end()) {
      if (is_ignored_call(fn)) return Value::opaque("seaborn config");
      return merge_all("call:sns." + fn, args);
    }
    int target = -1;
    if (const Value* ax = args.kw("ax"); ax && ax->kind == Value::Kind::axes) target = ax->axes;
    if (target < 0) target = current_axes();
    record_plot(target, "sns." + fn, args);
    return Value::axes_ref(target);
  }

  Value axes_call(int axes, const std::string& fn, const CallArgs& args, bool via_pyplot) {
    if (fn == "twinx" || fn == "twiny") return Value::axes_ref(axes < 0 ? current_axes() : axes);
    if (is_ignored_call(fn)) return Value::opaque("ignored " + fn);
    if (axes < 0) axes = current_axes();
    AxesState& a = axes_[static_cast<std::size_t>(axes)];

    auto first_string = [&](std::initializer_list<const char*> kws) -> std::optional<std::string> {
      if (const Value* v = args.pos(0); v && v->kind == Value::Kind::string) return trim(v->text);
      for (const char* k : kws) {
        if (const Value* v = args.kw(k); v && v->kind == Value::Kind::string) return trim(v->text);
      }
      return std::nullopt;
    };

    if (fn == "set_title") {
      if (auto s = first_string({"label"})) a.title = s;
      return Value::opaque("text");
    }
    if (fn == "set_xlabel") {
      if (auto s = first_string({"xlabel"})) a.x_label = s;
      return Value::opaque("text");
    }
    if (fn == "set_ylabel") {
      if (auto s = first_string({"ylabel"})) a.y_label = s;
      return Value::opaque("text");
    }
    if (fn == "set") {
      for (const auto& [k, v] : args.keywords) {
        if (v.kind != Value::Kind::string) continue;
        if (k == "title") a.title = trim(v.text);
        if (k == "xlabel") a.x_label = trim(v.text);
        if (k == "ylabel") a.y_label = trim(v.text);
      }
      return Value::opaque("set");
    }
    if (fn == "legend") {
      const Value* labels = args.kw("labels");
      if (!labels && args.positional.size() == 1) labels = args.pos(0);
      if (!labels && args.positional.size() >= 2) labels = args.pos(1);
      if (labels && labels->kind == Value::Kind::list) {
        for (const auto& item : labels->items) {
          if (item.kind == Value::Kind::string) a.explicit_legend.push_back(trim(item.text));
        }
      }
      return Value::opaque("legend");
    }
    if (fn == "set_xticklabels" || fn == "set_yticklabels" || fn == "set_xticks" || fn == "set_yticks") {
      const Value* labels = nullptr;
      if (fn == "set_xticklabels" || fn == "set_yticklabels") {
        labels = args.pos(0) ? args.pos(0) : args.kw("labels");
      } else {
        labels = args.pos(1) ? args.pos(1) : args.kw("labels");
      }
      if (labels && labels->kind == Value::Kind::list) {
        for (const auto& item : labels->items) {
          if (item.kind == Value::Kind::string) a.tick_labels.push_back(trim(item.text));
        }
      }
      return Value::opaque("ticks");
    }
    if (via_pyplot && (fn == "subplots" || fn == "figure")) return Value::opaque("figure");

    record_plot(axes, fn, args);
    return Value::opaque("artists");
  }

  // ---- series extraction ---------------------------------------------------

  enum class VecStatus { ok, non_numeric, nested, opaque, too_deep, non_finite };

  struct VecResult {
    VecStatus status = VecStatus::opaque;
    std::vector<double> values;
  };

  static VecResult numeric_vector(const Value& v) {
    VecResult r;
    if (v.contains_opaque()) {
      r.status = VecStatus::opaque;
      return r;
    }
    if (v.hops > 1) {
      r.status = VecStatus::too_deep;
      return r;
    }
    if (v.kind == Value::Kind::number) {
      r.values = {v.number};
    } else if (v.kind == Value::Kind::list) {
      for (const auto& it : v.items) {
        if (it.kind == Value::Kind::list || it.kind == Value::Kind::dict) {
          r.status = VecStatus::nested;
          return r;
        }
        if (it.kind != Value::Kind::number) {
          r.status = VecStatus::non_numeric;
          return r;
        }
        r.values.push_back(it.number);
      }
    } else {
      r.status = VecStatus::non_numeric;
      return r;
    }
    for (double d : r.values) {
      if (!std::isfinite(d)) {
        r.status = VecStatus::non_finite;
        return r;
      }
    }
    r.status = VecStatus::ok;
    return r;
  }

  void note_data_argument(const Value& v) {
    for (int o : v.origins) bindings_[static_cast<std::size_t>(o)].used_as_data = true;
    if (v.kind == Value::Kind::none || v.kind == Value::Kind::string || v.kind == Value::Kind::boolean) return;
    if (v.contains_opaque() || v.hops > 1) {
      analysis_.opaque_data_argument = true;
      return;
    }
    if (is_nested(v)) analysis_.nested_data = true;
    if (v.contains_number()) analysis_.literal_data_seen = true;
  }

  void note_style_argument(const Value& v) {
    for (int o : v.origins) bindings_[static_cast<std::size_t>(o)].used_as_style = true;
  }

  static bool is_data_value(const Value& v) {
    return v.kind == Value::Kind::list || v.kind == Value::Kind::number || v.kind == Value::Kind::dict ||
           v.kind == Value::Kind::opaque;
  }

  void record_plot(int axes, const std::string& call, const CallArgs& args) {
    // Classify argument usage first.
    for (const auto& a : args.positional) note_data_argument(a);
    for (const auto& [k, v] : args.keywords) {
      if (is_data_keyword(k) && k != "label" && k != "labels") {
        note_data_argument(v);
      } else {
        note_style_argument(v);
      }
    }

    AxesState& a = axes_[static_cast<std::size_t>(axes)];
    CallTraits traits;
    traits.projection = a.projection;
    if (const Value* s = args.kw("s"); s && s->kind == Value::Kind::list) traits.sized_markers = true;
    if (call == "candlestick_ohlc") traits.candle_style = true;

    std::string fn = call;
    if (call.rfind("sns.", 0) == 0) {
      static const std::map<std::string, std::string> kSeabornKind = {
          {"sns.barplot", "bar"},   {"sns.lineplot", "plot"},         {"sns.scatterplot", "scatter"},
          {"sns.histplot", "hist"}, {"sns.boxplot", "boxplot"},       {"sns.violinplot", "violinplot"},
          {"sns.heatmap", "heatmap"}, {"sns.countplot", "bar"},       {"sns.kdeplot", "kdeplot"}};
      fn = kSeabornKind.at(call);
    }
    std::optional<ChartType> type = chart_type_for_call(fn, traits);
    if (!type) {
      type = ChartType::other;
      diag("unrecognized plotting call '" + call + "' mapped to other");
    }
    const int call_index = static_cast<int>(a.types.size());
    a.types.push_back(*type);

    // Labels: single string or a list for multi-series calls.
    std::vector<std::optional<std::string>> labels;
    if (const Value* l = args.kw("label"); l) {
      if (l->kind == Value::Kind::string) {
        labels.push_back(trim(l->text));
      } else if (l->kind == Value::Kind::list) {
        for (const auto& it : l->items) {
          labels.push_back(it.kind == Value::Kind::string ? std::optional<std::string>(trim(it.text)) : std::nullopt);
        }
      }
    }
    if (const Value* l = args.kw("labels"); l && l->kind == Value::Kind::list &&
                                            (fn == "stackplot")) {
      labels.clear();
      for (const auto& it : l->items) {
        labels.push_back(it.kind == Value::Kind::string ? std::optional<std::string>(trim(it.text)) : std::nullopt);
      }
    }
    if (fn == "pie") {
      if (const Value* l = args.kw("labels"); l && l->kind == Value::Kind::list) {
        for (const auto& it : l->items) {
          if (it.kind == Value::Kind::string) a.explicit_legend.push_back(trim(it.text));
        }
      }
    }

    struct Pair {
      const Value* x = nullptr;
      const Value* y = nullptr;
    };
    std::vector<Pair> pairs;
    std::vector<const Value*> groups;  // one-dimensional-or-2D value arguments

    const auto kwv = [&](const char* k) { return args.kw(k); };
    const std::vector<Value>& p = args.positional;
    const bool seaborn = call.rfind("sns.", 0) == 0;

    if (seaborn) {
      if (fn == "hist" || fn == "boxplot" || fn == "violinplot" || fn == "kdeplot") {
        const Value* d = kwv("x") ? kwv("x") : (kwv("data") ? kwv("data") : (p.empty() ? nullptr : &p[0]));
        if (d) groups.push_back(d);
      } else if (fn != "heatmap") {
        const Value* x = kwv("x") ? kwv("x") : (p.size() >= 2 ? &p[0] : nullptr);
        const Value* y = kwv("y") ? kwv("y") : (p.size() >= 2 ? &p[1] : (p.size() == 1 ? &p[0] : nullptr));
        if (y) pairs.push_back({x, y});
      }
    } else if (fn == "plot" || fn == "semilogx" || fn == "semilogy" || fn == "loglog" || fn == "plot_date" ||
               fn == "fill" || fn == "polar") {
      std::size_t i = 0;
      while (i < p.size()) {
        if (!is_data_value(p[i])) {
          ++i;
          continue;
        }
        if (i + 1 < p.size() && is_data_value(p[i + 1])) {
          pairs.push_back({&p[i], &p[i + 1]});
          i += 2;
        } else {
          pairs.push_back({nullptr, &p[i]});
          i += 1;
        }
        if (i < p.size() && p[i].kind == Value::Kind::string) ++i;
      }
      if (pairs.empty() && kwv("y")) pairs.push_back({kwv("x"), kwv("y")});
    } else if (fn == "bar" || fn == "barh") {
      const Value* x = p.size() >= 1 ? &p[0] : (fn == "bar" ? kwv("x") : kwv("y"));
      const Value* h = p.size() >= 2 ? &p[1] : (fn == "bar" ? kwv("height") : kwv("width"));
      if (h) pairs.push_back({x, h});
    } else if (fn == "scatter" || fn == "scatter3D" || fn == "step" || fn == "errorbar" || fn == "hexbin" ||
               fn == "quiver" || fn == "streamplot" || fn == "barbs" || fn == "fill_between" ||
               fn == "fill_betweenx" || fn == "stairs") {
      const Value* x = p.size() >= 1 ? &p[0] : kwv("x");
      const Value* y = p.size() >= 2 ? &p[1] : (kwv("y") ? kwv("y") : kwv("y1"));
      if (fn == "stairs") {
        if (p.size() >= 1) pairs.push_back({nullptr, &p[0]});
      } else if (y) {
        pairs.push_back({x, y});
      } else if (x && (fn == "step")) {
        pairs.push_back({nullptr, x});
      }
    } else if (fn == "stem") {
      if (p.size() >= 2) {
        pairs.push_back({&p[0], &p[1]});
      } else if (p.size() == 1) {
        pairs.push_back({nullptr, &p[0]});
      }
    } else if (fn == "pie" || fn == "hist" || fn == "boxplot" || fn == "violinplot" || fn == "bxp") {
      const Value* d = p.empty() ? (kwv("x") ? kwv("x") : kwv("data")) : &p[0];
      if (d) groups.push_back(d);
    } else if (fn == "stackplot") {
      if (p.size() >= 2) {
        const Value* x = &p[0];
        for (std::size_t i = 1; i < p.size(); ++i) {
          if (p[i].kind == Value::Kind::list && !p[i].items.empty() && p[i].items[0].kind == Value::Kind::list) {
            for (const auto& row : p[i].items) {
              // Rows of a 2-D stack argument are owned by p[i]; pairs keep pointers into args.
              pairs.push_back({x, &row});
            }
          } else {
            pairs.push_back({x, &p[i]});
          }
        }
      }
    } else if (fn == "bar3d") {
      if (p.size() >= 6) pairs.push_back({nullptr, &p[5]});
    }

    // Multi-dimensional `groups` expand into one series per row.
    for (const Value* g : groups) {
      if (g->kind == Value::Kind::list && !g->items.empty() &&
          std::all_of(g->items.begin(), g->items.end(), [](const Value& v) { return v.kind == Value::Kind::list; })) {
        for (const auto& row : g->items) {
          Value r = row;
          r.absorb(*g);
          add_series(axes, call_index, call, nullptr, &r, labels);
        }
      } else if (g->kind == Value::Kind::dict) {
        Value r = Value::list(g->items);
        r.absorb(*g);
        add_series(axes, call_index, call, nullptr, &r, labels);
      } else {
        add_series(axes, call_index, call, nullptr, g, labels);
      }
    }
    for (const auto& pr : pairs) add_series(axes, call_index, call, pr.x, pr.y, labels);
  }

  void add_series(int axes, int call_index, const std::string& call, const Value* x, const Value* y,
                  const std::vector<std::optional<std::string>>& labels) {
    const int sub = static_cast<int>(std::count_if(series_.begin(), series_.end(), [&](const RawSeries& s) {
      return s.axes == axes && s.call_index == call_index;
    }));
    VecResult yv = numeric_vector(*y);
    if (yv.status != VecStatus::ok) {
      if (yv.status != VecStatus::non_numeric) diag("series data of '" + call + "' not extractable");
      return;
    }
    RawSeries s;
    s.axes = axes;
    s.call_index = call_index;
    s.sub_index = sub;
    s.source_call = call;
    s.y = std::move(yv.values);
    if (x && x->kind != Value::Kind::none) {
      VecResult xv = numeric_vector(*x);
      if (xv.status == VecStatus::ok && xv.values.size() == s.y.size()) {
        s.x = std::move(xv.values);
      } else if (xv.status == VecStatus::ok) {
        diag("x/y length mismatch in '" + call + "'; x dropped");
      }
    }
    if (labels.size() == 1) {
      s.label = labels[0];
    } else if (static_cast<std::size_t>(sub) < labels.size()) {
      s.label = labels[static_cast<std::size_t>(sub)];
    }
    series_.push_back(std::move(s));
  }

  // ---- finalization ----------------------------------------------------------

  ScriptAnalysis finish() {
    if (axes_.empty()) axes_at(1, 1, 0, 0, Projection::cartesian);

    // Data-bearing assignments that were never consumed as style.
    for (std::size_t i = 0; i < bindings_.size(); ++i) {
      const Binding& b = bindings_[i];
      if (b.value.is_handle() || b.used_as_style) continue;
      if (b.value.kind == Value::Kind::opaque) {
        if (b.value.text.rfind("call:", 0) == 0) analysis_.opaque_data_assignment = true;
        continue;
      }
      if ((b.value.kind == Value::Kind::list || b.value.kind == Value::Kind::dict) && b.value.contains_number()) {
        if (b.value.contains_opaque()) {
          if (b.used_as_data) analysis_.opaque_data_argument = true;
          continue;
        }
        if (is_nested(b.value)) analysis_.nested_data = true;
        analysis_.literal_data_seen = true;
      }
    }

    // Canonical axes order.
    std::vector<int> order(axes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
      const auto& a = axes_[static_cast<std::size_t>(l)];
      const auto& b = axes_[static_cast<std::size_t>(r)];
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<int> rank(axes_.size());
    for (std::size_t k = 0; k < order.size(); ++k) rank[static_cast<std::size_t>(order[k])] = static_cast<int>(k);

    ChartSpec spec;
    spec.layout.nrows = grid_rows_;
    spec.layout.ncols = grid_cols_;
    spec.layout.axes_count = static_cast<int>(axes_.size());
    if (spec.layout.axes_count > spec.layout.nrows * spec.layout.ncols) {
      diag("more axes than grid cells; rows expanded");
      spec.layout.nrows = (spec.layout.axes_count + spec.layout.ncols - 1) / spec.layout.ncols;
    }
    for (int idx : order) {
      const auto& a = axes_[static_cast<std::size_t>(idx)];
      spec.axes.push_back(AxesNode{a.row, a.col, a.projection, a.types});
      spec.text.title.push_back(a.title);
      spec.text.x_label.push_back(a.x_label);
      spec.text.y_label.push_back(a.y_label);
    }

    std::vector<RawSeries> raw = series_;
    std::stable_sort(raw.begin(), raw.end(), [&](const RawSeries& l, const RawSeries& r) {
      return std::make_tuple(rank[static_cast<std::size_t>(l.axes)], l.call_index, l.sub_index) <
             std::make_tuple(rank[static_cast<std::size_t>(r.axes)], r.call_index, r.sub_index);
    });
    for (auto& r : raw) {
      DataSeries s;
      s.axes_index = rank[static_cast<std::size_t>(r.axes)];
      s.call_index = r.call_index;
      s.label = r.label;
      s.x = r.x;
      s.y = r.y;
      s.source_call = r.source_call;
      if (s.label) spec.text.legend_labels.push_back(*s.label);
      spec.series.push_back(std::move(s));
    }
    for (int idx : order) {
      const auto& a = axes_[static_cast<std::size_t>(idx)];
      spec.text.legend_labels.insert(spec.text.legend_labels.end(), a.explicit_legend.begin(),
                                     a.explicit_legend.end());
      spec.text.tick_label_overrides.insert(spec.text.tick_label_overrides.end(), a.tick_labels.begin(),
                                            a.tick_labels.end());
    }
    spec.parse_diagnostics = std::move(diagnostics_);
    analysis_.spec = std::move(spec);
    return std::move(analysis_);
  }

 public:
  static std::string format_number(double d) {
    if (std::isfinite(d) && d == std::trunc(d) && std::fabs(d) < 9007199254740992.0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.0f", d);
      return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
  }
};

}  // namespace detail

/// Full analysis of a script. Throws ParseError when it does not tokenize.
inline ScriptAnalysis analyze(const PlotScript& script) {
  detail::Interpreter interp;
  return interp.run(script.source);
}

/// Maps a plotting script to its canonical ChartSpec.
///
/// Unrecognized but well-formed statements are skipped and reported in
/// `parse_diagnostics`. Throws ParseError only for scripts that do not
/// tokenize (unbalanced brackets, unterminated strings).
inline ChartSpec parse(const PlotScript& script) { return analyze(script).spec; }

inline ChartSpec parse(std::string_view source) { return parse(PlotScript{std::string(source)}); }

/// Union multiset of chart types found by walking root -> axes -> plot call.
inline ChartTypeMultiset identify_chart_types(const ChartSpec& spec) {
  ChartTypeMultiset out;
  for (const auto& axes : spec.axes) out.insert(out.end(), axes.chart_types.begin(), axes.chart_types.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline DataFormat classify_data_format(const ScriptAnalysis& a) {
  if (a.nested_data) return DataFormat::nested;
  if (a.opaque_data_argument) return DataFormat::non_extractable;
  if (a.opaque_data_assignment && !a.literal_data_seen) return DataFormat::non_extractable;
  return DataFormat::flat_ok;
}

/// Data-definition format of a script. Propagates ParseError.
inline DataFormat classify_data_format(const PlotScript& script) { return classify_data_format(analyze(script)); }

}  // namespace chartrl
