#pragma once

// Renders a ChartSpec back into dialect source. Parsing the rendered text
// yields the same spec, which makes the rendering a canonical form for any
// script: render(parse(a)) == render(parse(b)) whenever a and b normalize to
// the same chart.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chartrl/chart_spec.hpp"
#include "chartrl/normalizer.hpp"

namespace chartrl {

namespace detail {

inline std::string py_string(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out += "\"";
  return out;
}

inline std::string py_list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += Interpreter::format_number(v[i]);
  }
  return out + "]";
}

inline std::string py_list(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += py_string(v[i]);
  }
  return out + "]";
}

inline std::string py_opt_x(const DataSeries& s) { return s.x ? py_list(*s.x) : std::string("None"); }

inline std::string label_kw(const std::vector<const DataSeries*>& group, const char* key = "label") {
  bool any = false;
  for (const auto* s : group) any = any || s->label.has_value();
  if (!any) return "";
  if (group.size() == 1) return std::string(", ") + key + "=" + py_string(*group[0]->label);
  std::string out = std::string(", ") + key + "=[";
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (i) out += ", ";
    out += group[i]->label ? py_string(*group[i]->label) : "None";
  }
  return out + "]";
}

}  // namespace detail

/// Renders `spec` as dialect source whose parse equals `spec`.
inline std::string render_canonical(const ChartSpec& spec) {
  using detail::py_list;
  using detail::py_string;
  std::ostringstream out;
  out << "import matplotlib.pyplot as plt\n";
  out << "import seaborn as sns\n";
  out << "from mplfinance.original_flavor import candlestick_ohlc\n";
  out << "fig = plt.figure()\n";

  const int R = spec.layout.nrows;
  const int C = spec.layout.ncols;
  auto subplot_args = [&](const AxesNode& a) {
    std::string s = std::to_string(R) + ", " + std::to_string(C) + ", " + std::to_string(a.row * C + a.col + 1);
    if (a.projection == Projection::polar) s += ", projection=\"polar\"";
    if (a.projection == Projection::three_d) s += ", projection=\"3d\"";
    return s;
  };
  for (std::size_t i = 0; i < spec.axes.size(); ++i) {
    out << "ax" << i << " = fig.add_subplot(" << subplot_args(spec.axes[i]) << ")\n";
  }

  std::size_t labeled_series = 0;
  for (const auto& s : spec.series) labeled_series += s.label ? 1 : 0;

  for (std::size_t i = 0; i < spec.axes.size(); ++i) {
    const AxesNode& a = spec.axes[i];
    const std::string ax = "ax" + std::to_string(i);
    for (std::size_t t = 0; t < a.chart_types.size(); ++t) {
      const ChartType type = a.chart_types[t];
      std::vector<const DataSeries*> group;
      for (const auto& s : spec.series) {
        if (s.axes_index == static_cast<int>(i) && s.call_index == static_cast<int>(t)) group.push_back(&s);
      }
      if (group.empty()) {
        if (type == ChartType::candlestick) {
          out << "candlestick_ohlc(" << ax << ")\n";
        } else if (type == ChartType::bubble) {
          out << ax << ".scatter(s=[1])\n";
        } else {
          out << ax << "." << canonical_call_name(type) << "()\n";
        }
        continue;
      }

      const std::string& fn = group.front()->source_call;
      const std::string labels = detail::label_kw(group);
      const std::string bubble = type == ChartType::bubble ? ", s=[1]" : "";
      if (fn == "plot" || fn == "semilogx" || fn == "semilogy" || fn == "loglog" || fn == "plot_date" ||
          fn == "fill" || fn == "polar") {
        std::string args;
        for (const auto* s : group) {
          if (!args.empty()) args += ", ";
          if (s->x) args += py_list(*s->x) + ", ";
          args += py_list(s->y) + ", \"-\"";
        }
        if (fn == "polar") {
          out << "plt.subplot(" << subplot_args(a) << ")\n";
          out << "plt.polar(" << args << labels << ")\n";
        } else {
          out << ax << "." << fn << "(" << args << labels << ")\n";
        }
      } else if (fn == "stairs") {
        out << ax << ".stairs(" << py_list(group.front()->y) << labels << ")\n";
      } else if (fn == "stem") {
        const auto* s = group.front();
        out << ax << ".stem(" << (s->x ? py_list(*s->x) + ", " : std::string()) << py_list(s->y) << labels << ")\n";
      } else if (fn == "pie" || fn == "hist" || fn == "boxplot" || fn == "violinplot" || fn == "bxp") {
        std::string data;
        if (group.size() == 1) {
          data = py_list(group.front()->y);
        } else {
          data = "[";
          for (std::size_t k = 0; k < group.size(); ++k) data += (k ? ", " : "") + py_list(group[k]->y);
          data += "]";
        }
        out << ax << "." << fn << "(" << data << labels << ")\n";
      } else if (fn == "stackplot") {
        std::string args = detail::py_opt_x(*group.front());
        for (const auto* s : group) args += ", " + py_list(s->y);
        out << ax << ".stackplot(" << args << detail::label_kw(group, "labels") << ")\n";
      } else if (fn == "bar3d") {
        out << ax << ".bar3d(None, None, None, None, None, " << py_list(group.front()->y) << labels << ")\n";
      } else if (fn.rfind("sns.", 0) == 0) {
        const bool grouped = fn == "sns.histplot" || fn == "sns.boxplot" || fn == "sns.violinplot" ||
                             fn == "sns.kdeplot";
        std::string args;
        if (grouped) {
          if (group.size() == 1) {
            args = "x=" + py_list(group.front()->y);
          } else {
            args = "x=[";
            for (std::size_t k = 0; k < group.size(); ++k) args += (k ? ", " : "") + py_list(group[k]->y);
            args += "]";
          }
        } else {
          const auto* s = group.front();
          if (s->x) args = "x=" + py_list(*s->x) + ", ";
          args += "y=" + py_list(s->y);
        }
        out << fn << "(" << args << labels << ", ax=" << ax << ")\n";
      } else {
        // Two-argument (x, y) calls: bar, barh, scatter, step, errorbar, area, ...
        const auto* s = group.front();
        out << ax << "." << fn << "(" << detail::py_opt_x(*s) << ", " << py_list(s->y) << bubble << labels << ")\n";
      }
    }
    if (i < spec.text.title.size() && spec.text.title[i]) out << ax << ".set_title(" << py_string(*spec.text.title[i]) << ")\n";
    if (i < spec.text.x_label.size() && spec.text.x_label[i]) out << ax << ".set_xlabel(" << py_string(*spec.text.x_label[i]) << ")\n";
    if (i < spec.text.y_label.size() && spec.text.y_label[i]) out << ax << ".set_ylabel(" << py_string(*spec.text.y_label[i]) << ")\n";
  }

  if (spec.text.legend_labels.size() > labeled_series && !spec.axes.empty()) {
    std::vector<std::string> extra(spec.text.legend_labels.begin() + static_cast<long>(labeled_series),
                                   spec.text.legend_labels.end());
    out << "ax0.legend(" << py_list(extra) << ")\n";
  }
  if (!spec.text.tick_label_overrides.empty() && !spec.axes.empty()) {
    out << "ax0.set_xticklabels(" << py_list(spec.text.tick_label_overrides) << ")\n";
  }
  return out.str();
}

}  // namespace chartrl
