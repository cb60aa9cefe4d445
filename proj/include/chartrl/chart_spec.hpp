#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chartrl/chart_type.hpp"

namespace chartrl {

enum class ScriptOrigin { reference, candidate };

/// Source text of one plotting script.
struct PlotScript {
  std::string source;
  ScriptOrigin origin = ScriptOrigin::candidate;
};

struct LayoutSpec {
  int nrows = 1;
  int ncols = 1;
  int axes_count = 1;

  friend bool operator==(const LayoutSpec&, const LayoutSpec&) = default;
};

/// One axes node of the chart tree. Nodes are kept in (row, col) order.
struct AxesNode {
  int row = 0;
  int col = 0;
  Projection projection = Projection::cartesian;
  /// Chart types in plot-call order.
  std::vector<ChartType> chart_types;

  friend bool operator==(const AxesNode&, const AxesNode&) = default;
};

struct DataSeries {
  int axes_index = 0;
  /// Ordinal of the producing plot call within its axes.
  int call_index = 0;
  std::optional<std::string> label;
  std::optional<std::vector<double>> x;
  std::vector<double> y;
  std::string source_call;

  friend bool operator==(const DataSeries&, const DataSeries&) = default;
};

/// Text content. `title`, `x_label` and `y_label` are indexed by axes node.
struct TextElements {
  std::vector<std::optional<std::string>> title;
  std::vector<std::optional<std::string>> x_label;
  std::vector<std::optional<std::string>> y_label;
  std::vector<std::string> legend_labels;
  std::vector<std::string> tick_label_overrides;

  friend bool operator==(const TextElements&, const TextElements&) = default;
};

/// Canonical structural summary of a plotting script.
///
/// Equality ignores `parse_diagnostics`: two scripts that differ only in
/// naming or statement order produce equal specs even if the warnings they
/// raised mention different identifiers.
struct ChartSpec {
  std::vector<AxesNode> axes;
  LayoutSpec layout;
  std::vector<DataSeries> series;
  TextElements text;
  std::vector<std::string> parse_diagnostics;

  friend bool operator==(const ChartSpec& a, const ChartSpec& b) {
    return a.axes == b.axes && a.layout == b.layout && a.series == b.series && a.text == b.text;
  }
};

/// Multiset of chart types, stored sorted by enum order.
using ChartTypeMultiset = std::vector<ChartType>;

}  // namespace chartrl
