#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "chartrl/canonical_text.hpp"
#include "chartrl/chart_spec.hpp"
#include "chartrl/digest.hpp"
#include "chartrl/normalizer.hpp"
#include "chartrl/png_image.hpp"
#include "chartrl/render_status.hpp"

namespace chartrl {

/// Executes plotting scripts. Implementations must be safe to call from
/// several threads. Infrastructure failures throw RendererUnavailable; a
/// script that fails to run is a RenderStatus, not an exception.
class Renderer {
 public:
  virtual ~Renderer() = default;
  virtual RenderStatus render(const PlotScript& script) = 0;
};

namespace detail {

inline void fill_rect(Raster& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) img.set(x, y, r, g, b);
  }
}

inline void draw_line(Raster& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    img.set(x, y, r, g, b);
    img.set(x, y + 1, r, g, b);
  }
}

inline std::array<std::uint8_t, 3> palette(std::size_t k) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kColors = {{
      {31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
      {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
  }};
  return kColors[k % kColors.size()];
}

}  // namespace detail

/// Deterministic schematic rendering of a ChartSpec: one cell per axes,
/// bars for bar-like kinds and polylines otherwise, with a text stripe per
/// title and axis label. Not a faithful chart; it gives offline judges a
/// picture whose pixels move with the spec.
inline Raster rasterize_schematic(const ChartSpec& spec, int width = 160, int height = 120) {
  Raster img(width, height);
  const int rows = std::max(1, spec.layout.nrows);
  const int cols = std::max(1, spec.layout.ncols);
  const int cw = width / cols;
  const int ch = height / rows;

  for (std::size_t ai = 0; ai < spec.axes.size(); ++ai) {
    const AxesNode& a = spec.axes[ai];
    const int x0 = a.col * cw + 4;
    const int y0 = a.row * ch + 10;
    const int x1 = (a.col + 1) * cw - 4;
    const int y1 = (a.row + 1) * ch - 10;
    detail::draw_line(img, x0, y1, x1, y1, 0, 0, 0);
    detail::draw_line(img, x0, y0, x0, y1, 0, 0, 0);

    auto stripe = [&](const std::optional<std::string>& text, int y, std::uint8_t shade) {
      if (!text || text->empty()) return;
      const int len = std::min(static_cast<int>(text->size()) * 2, x1 - x0);
      const auto h = sha256_hex(*text);
      const std::uint8_t tint = static_cast<std::uint8_t>(std::stoi(h.substr(0, 2), nullptr, 16) / 4);
      detail::fill_rect(img, x0, y, x0 + len, y + 1, shade, static_cast<std::uint8_t>(shade / 2 + tint), tint);
    };
    if (ai < spec.text.title.size()) stripe(spec.text.title[ai], a.row * ch + 3, 40);
    if (ai < spec.text.x_label.size()) stripe(spec.text.x_label[ai], y1 + 4, 90);
    if (ai < spec.text.y_label.size() && spec.text.y_label[ai]) {
      const int len = std::min(static_cast<int>(spec.text.y_label[ai]->size()) * 2, y1 - y0);
      detail::fill_rect(img, a.col * cw + 1, y1 - len, a.col * cw + 2, y1, 90, 45, 20);
    }

    std::vector<const DataSeries*> series;
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& s : spec.series) {
      if (s.axes_index != static_cast<int>(ai)) continue;
      series.push_back(&s);
      for (double v : s.y) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi - lo <= 0.0) hi = lo + 1.0;
    const auto ypix = [&](double v) {
      return y1 - 1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * (y1 - y0 - 2)));
    };

    for (std::size_t si = 0; si < series.size(); ++si) {
      const DataSeries& s = *series[si];
      const ChartType type = s.call_index < static_cast<int>(a.chart_types.size())
                                 ? a.chart_types[static_cast<std::size_t>(s.call_index)]
                                 : ChartType::other;
      const auto color = detail::palette(static_cast<std::size_t>(type) + si);
      const std::size_t n = s.y.size();
      if (n == 0) continue;
      const double span = static_cast<double>(x1 - x0 - 4);
      const bool bars = type == ChartType::bar || type == ChartType::histogram || type == ChartType::bar_3d ||
                        type == ChartType::box || type == ChartType::violin || type == ChartType::pie ||
                        type == ChartType::stackplot || type == ChartType::area;
      if (bars) {
        const double slot = span / static_cast<double>(n * series.size());
        for (std::size_t k = 0; k < n; ++k) {
          const int bx = x0 + 2 + static_cast<int>(slot * static_cast<double>(k * series.size() + si));
          const int bw = std::max(1, static_cast<int>(slot) - 1);
          detail::fill_rect(img, bx, ypix(s.y[k]), bx + bw - 1, ypix(0.0 < lo ? lo : 0.0), color[0], color[1],
                            color[2]);
        }
      } else if (type == ChartType::barh) {
        const double slot = static_cast<double>(y1 - y0 - 2) / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
          const int by = y0 + static_cast<int>(slot * static_cast<double>(k));
          const int len = static_cast<int>(std::lround((s.y[k] - lo) / (hi - lo) * span));
          detail::fill_rect(img, x0 + 1, by, x0 + 1 + len, by + std::max(1, static_cast<int>(slot) - 2), color[0],
                            color[1], color[2]);
        }
      } else {
        int px = -1;
        int py = -1;
        for (std::size_t k = 0; k < n; ++k) {
          const int x = x0 + 2 + (n == 1 ? 0 : static_cast<int>(std::lround(span * static_cast<double>(k) / static_cast<double>(n - 1))));
          const int y = ypix(s.y[k]);
          const bool points = type == ChartType::scatter || type == ChartType::bubble || type == ChartType::stem;
          if (points) {
            detail::fill_rect(img, x - 1, y - 1, x + 1, y + 1, color[0], color[1], color[2]);
          } else if (px >= 0) {
            detail::draw_line(img, px, py, x, y, color[0], color[1], color[2]);
          }
          px = x;
          py = y;
        }
      }
    }
  }
  return img;
}

/// Offline stand-in for the render service: a script "renders" iff it
/// parses and contains at least one whitelisted plotting call. The image is
/// the schematic rasterization of its ChartSpec.
class StubRenderer : public Renderer {
 public:
  RenderStatus render(const PlotScript& script) override {
    ChartSpec spec;
    try {
      spec = parse(script);
    } catch (const ParseError& e) {
      return RenderStatus::failure(RenderOutcome::parse_error, e.what());
    }
    bool drawable = false;
    for (const auto& a : spec.axes) {
      for (auto t : a.chart_types) drawable = drawable || t != ChartType::other;
    }
    if (!drawable) return RenderStatus::failure(RenderOutcome::runtime_error, "no plotting call");
    return RenderStatus::success(encode_png(rasterize_schematic(spec)));
  }
};

/// Memoizes renders by SHA-256 of the script source, so one candidate is
/// executed once for both the execution and the visual reward.
class CachingRenderer : public Renderer {
 public:
  explicit CachingRenderer(Renderer& inner) : inner_(inner) {}

  RenderStatus render(const PlotScript& script) override {
    const std::string key = sha256_hex(script.source);
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    RenderStatus status = inner_.render(script);
    std::lock_guard lock(mu_);
    return cache_.emplace(key, std::move(status)).first->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  Renderer& inner_;
  mutable std::mutex mu_;
  std::map<std::string, RenderStatus> cache_;
};

}  // namespace chartrl
