#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace chartrl {

/// Closed taxonomy of 24 chart kinds. `other` absorbs every plotting call
/// that is not in the whitelist.
enum class ChartType {
  line,
  bar,
  barh,
  scatter,
  pie,
  histogram,
  box,
  violin,
  heatmap,
  area,
  errorbar,
  stackplot,
  contour,
  hexbin,
  quiver,
  step,
  stem,
  polar_line,
  radar,
  surface_3d,
  bar_3d,
  candlestick,
  bubble,
  other,
};

inline constexpr std::size_t kChartTypeCount = 24;

inline constexpr std::array<std::string_view, kChartTypeCount> kChartTypeNames = {
    "line",    "bar",       "barh",    "scatter",   "pie",        "histogram",
    "box",     "violin",    "heatmap", "area",      "errorbar",   "stackplot",
    "contour", "hexbin",    "quiver",  "step",      "stem",       "polar-line",
    "radar",   "3d-surface", "3d-bar", "candlestick", "bubble",   "other",
};

inline std::string_view to_string(ChartType t) {
  return kChartTypeNames[static_cast<std::size_t>(t)];
}

inline std::optional<ChartType> chart_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kChartTypeCount; ++i) {
    if (kChartTypeNames[i] == name) return static_cast<ChartType>(i);
  }
  return std::nullopt;
}

/// Projection of the axes a plotting call lands on; a few functions change
/// meaning on polar or 3-D axes.
enum class Projection { cartesian, polar, three_d };

/// Context of one plotting call that decides its ChartType beyond the
/// function name alone.
struct CallTraits {
  Projection projection = Projection::cartesian;
  bool sized_markers = false;   // scatter with a per-point `s=` sequence
  bool candle_style = false;    // mpf.plot(..., type="candle")
};

/// Whitelisted plotting functions. Returns nullopt for names that are not
/// chart-producing calls at all (labels, limits, layout helpers); those are
/// handled elsewhere or ignored.
inline std::optional<ChartType> chart_type_for_call(std::string_view fn, const CallTraits& traits = {}) {
  using CT = ChartType;
  const bool polar = traits.projection == Projection::polar;
  const bool three_d = traits.projection == Projection::three_d;

  if (fn == "plot" || fn == "semilogx" || fn == "semilogy" || fn == "loglog" || fn == "plot_date") {
    return polar ? CT::polar_line : CT::line;
  }
  if (fn == "polar") return CT::polar_line;
  if (fn == "bar") return three_d ? CT::bar_3d : CT::bar;
  if (fn == "barh") return CT::barh;
  if (fn == "scatter" || fn == "scatter3D") return traits.sized_markers ? CT::bubble : CT::scatter;
  if (fn == "pie") return CT::pie;
  if (fn == "hist") return CT::histogram;
  if (fn == "boxplot" || fn == "bxp") return CT::box;
  if (fn == "violinplot") return CT::violin;
  if (fn == "imshow" || fn == "pcolormesh" || fn == "pcolor" || fn == "matshow" || fn == "heatmap" ||
      fn == "hist2d") {
    return CT::heatmap;
  }
  if (fn == "fill_between" || fn == "fill_betweenx") return CT::area;
  if (fn == "fill") return polar ? CT::radar : CT::area;
  if (fn == "errorbar") return CT::errorbar;
  if (fn == "stackplot") return CT::stackplot;
  if (fn == "contour" || fn == "contourf" || fn == "tricontour" || fn == "tricontourf") return CT::contour;
  if (fn == "hexbin") return CT::hexbin;
  if (fn == "quiver" || fn == "streamplot" || fn == "barbs") return CT::quiver;
  if (fn == "step" || fn == "stairs") return CT::step;
  if (fn == "stem") return CT::stem;
  if (fn == "plot_surface" || fn == "plot_wireframe" || fn == "plot_trisurf") return CT::surface_3d;
  if (fn == "bar3d") return CT::bar_3d;
  if (fn == "candlestick_ohlc" || fn == "candlestick2_ohlc") return CT::candlestick;
  if (fn == "mpf_plot") return traits.candle_style ? CT::candlestick : CT::line;
  return std::nullopt;
}

/// Canonical function name used when rendering a ChartType back to script
/// text. Paired with the projection the hosting axes must declare.
inline std::string_view canonical_call_name(ChartType t) {
  using CT = ChartType;
  switch (t) {
    case CT::line: return "plot";
    case CT::bar: return "bar";
    case CT::barh: return "barh";
    case CT::scatter: return "scatter";
    case CT::pie: return "pie";
    case CT::histogram: return "hist";
    case CT::box: return "boxplot";
    case CT::violin: return "violinplot";
    case CT::heatmap: return "imshow";
    case CT::area: return "fill_between";
    case CT::errorbar: return "errorbar";
    case CT::stackplot: return "stackplot";
    case CT::contour: return "contour";
    case CT::hexbin: return "hexbin";
    case CT::quiver: return "quiver";
    case CT::step: return "step";
    case CT::stem: return "stem";
    case CT::polar_line: return "plot";
    case CT::radar: return "fill";
    case CT::surface_3d: return "plot_surface";
    case CT::bar_3d: return "bar3d";
    case CT::candlestick: return "candlestick_ohlc";
    case CT::bubble: return "scatter";
    case CT::other: return "custom_plot";
  }
  return "custom_plot";
}

inline Projection required_projection(ChartType t) {
  switch (t) {
    case ChartType::polar_line:
    case ChartType::radar: return Projection::polar;
    case ChartType::surface_3d:
    case ChartType::bar_3d: return Projection::three_d;
    default: return Projection::cartesian;
  }
}

}  // namespace chartrl
