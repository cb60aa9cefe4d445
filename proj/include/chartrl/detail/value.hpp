#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace chartrl::detail {

/// Runtime value produced while evaluating a script statement.
struct Value {
  enum class Kind { none, boolean, number, string, list, dict, opaque, axes, axes_grid, figure, module, function };

  Kind kind = Kind::opaque;
  double number = 0.0;
  std::string text;            // string contents, module/function name, opaque reason
  std::vector<Value> items;    // list elements, dict values (parallel to keys), grid cells
  std::vector<std::string> keys;
  int axes = -1;
  int grid_rows = 0;
  int grid_cols = 0;
  bool is_tuple = false;
  /// Name hops between the literal that produced this value and its use.
  int hops = 0;
  /// Binding ids referenced while computing the value.
  std::vector<int> origins;

  static Value none() { return make(Kind::none); }
  static Value boolean(bool b) {
    Value v = make(Kind::boolean);
    v.number = b ? 1.0 : 0.0;
    return v;
  }
  static Value num(double d) {
    Value v = make(Kind::number);
    v.number = d;
    return v;
  }
  static Value str(std::string s) {
    Value v = make(Kind::string);
    v.text = std::move(s);
    return v;
  }
  static Value list(std::vector<Value> items, bool tuple = false) {
    Value v = make(Kind::list);
    v.items = std::move(items);
    v.is_tuple = tuple;
    for (const auto& it : v.items) v.absorb(it);
    return v;
  }
  static Value opaque(std::string why) {
    Value v = make(Kind::opaque);
    v.text = std::move(why);
    return v;
  }
  static Value module(std::string name) {
    Value v = make(Kind::module);
    v.text = std::move(name);
    return v;
  }
  static Value function(std::string name) {
    Value v = make(Kind::function);
    v.text = std::move(name);
    return v;
  }
  static Value axes_ref(int id) {
    Value v = make(Kind::axes);
    v.axes = id;
    return v;
  }
  static Value figure() { return make(Kind::figure); }

  /// Builds a dict with keys sorted lexicographically; later duplicates win.
  static Value dict(std::vector<std::pair<std::string, Value>> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    Value v = make(Kind::dict);
    for (auto& [k, val] : entries) {
      if (!v.keys.empty() && v.keys.back() == k) {
        v.items.back() = std::move(val);
        continue;
      }
      v.keys.push_back(k);
      v.items.push_back(std::move(val));
    }
    for (const auto& it : v.items) v.absorb(it);
    return v;
  }

  bool is(Kind k) const { return kind == k; }
  bool is_handle() const {
    return kind == Kind::axes || kind == Kind::axes_grid || kind == Kind::figure || kind == Kind::module ||
           kind == Kind::function;
  }

  /// Merges indirection depth and provenance of a component value.
  void absorb(const Value& other) {
    hops = std::max(hops, other.hops);
    for (int o : other.origins) {
      if (std::find(origins.begin(), origins.end(), o) == origins.end()) origins.push_back(o);
    }
  }

  /// Deepest list/dict nesting, counting only containers. Scalars are 0.
  int depth() const {
    if (kind != Kind::list && kind != Kind::dict) return 0;
    int d = 0;
    for (const auto& it : items) d = std::max(d, it.depth());
    return d + 1;
  }

  bool contains_opaque() const {
    if (kind == Kind::opaque) return true;
    return std::any_of(items.begin(), items.end(), [](const Value& v) { return v.contains_opaque(); });
  }

  bool contains_number() const {
    if (kind == Kind::number) return true;
    return std::any_of(items.begin(), items.end(), [](const Value& v) { return v.contains_number(); });
  }

  bool has_dict_valued_dict() const {
    if (kind == Kind::dict) {
      for (const auto& it : items) {
        if (it.kind == Kind::dict) return true;
      }
    }
    return std::any_of(items.begin(), items.end(), [](const Value& v) { return v.has_dict_valued_dict(); });
  }

 private:
  static Value make(Kind k) {
    Value v;
    v.kind = k;
    return v;
  }
};

}  // namespace chartrl::detail
