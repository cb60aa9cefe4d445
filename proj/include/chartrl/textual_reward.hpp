#pragma once

// Rule-based textual reward: five aspects of a candidate ChartSpec compared
// against the reference, plus the binary execution reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "chartrl/chart_spec.hpp"
#include "chartrl/edit_distance.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/normalizer.hpp"
#include "chartrl/render_status.hpp"

namespace chartrl {

struct TextualWeights {
  double data = 0.4;
  double type = 0.3;
  double layout = 0.1;
  double title = 0.1;
  double labels = 0.1;

  std::array<double, 5> as_array() const { return {data, type, layout, title, labels}; }

  /// Throws ValidationError unless all weights are non-negative and sum to 1.
  void validate() const {
    double sum = 0.0;
    for (double w : as_array()) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("textual weights must be non-negative");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw ValidationError("textual weights must sum to 1");
  }
};

struct Tolerance {
  double rel_eps = 0.05;
  double abs_floor = 1e-9;

  void validate() const {
    if (!(rel_eps > 0.0)) throw ValidationError("rel_eps must be positive");
    if (!(abs_floor >= 0.0)) throw ValidationError("abs_floor must be non-negative");
  }
};

struct TextualBreakdown {
  double data_score = 0.0;
  double type_score = 0.0;
  double layout_score = 0.0;
  double title_score = 0.0;
  double labels_score = 0.0;
  double accuracy = 0.0;
  bool exec_success = false;

  std::array<double, 5> components() const { return {data_score, type_score, layout_score, title_score, labels_score}; }

  friend bool operator==(const TextualBreakdown&, const TextualBreakdown&) = default;
};

/// Inclusive tolerance test: |cand - ref| <= max(rel_eps·|ref|, abs_floor).
inline bool values_match(double ref, double cand, const Tolerance& tol) {
  return std::fabs(cand - ref) <= std::max(tol.rel_eps * std::fabs(ref), tol.abs_floor);
}

/// Positionally aligned matches between two value vectors.
inline std::size_t matched_values(const std::vector<double>& ref, const std::vector<double>& cand,
                                  const Tolerance& tol) {
  const std::size_t n = std::min(ref.size(), cand.size());
  std::size_t m = 0;
  for (std::size_t k = 0; k < n; ++k) m += values_match(ref[k], cand[k], tol) ? 1 : 0;
  return m;
}

struct SeriesAlignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (ref index, cand index)
  std::size_t matched = 0;
};

/// Greedy series alignment: repeatedly take the unused (ref, cand) pair with
/// the highest match rate, matched / max(|ref|, |cand|). Ties go to the lower
/// ref index, then the lower cand index. Pairs with no matched value are not
/// taken.
inline SeriesAlignment align_series_greedy(const std::vector<DataSeries>& ref, const std::vector<DataSeries>& cand,
                                           const Tolerance& tol) {
  struct Candidate {
    double rate;
    std::size_t r, c, matched;
  };
  std::vector<Candidate> all;
  for (std::size_t r = 0; r < ref.size(); ++r) {
    for (std::size_t c = 0; c < cand.size(); ++c) {
      const std::size_t m = matched_values(ref[r].y, cand[c].y, tol);
      if (m == 0) continue;
      const double denom = static_cast<double>(std::max(ref[r].y.size(), cand[c].y.size()));
      all.push_back({static_cast<double>(m) / denom, r, c, m});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.rate != b.rate) return a.rate > b.rate;
    if (a.r != b.r) return a.r < b.r;
    return a.c < b.c;
  });
  SeriesAlignment out;
  std::vector<bool> used_r(ref.size()), used_c(cand.size());
  for (const auto& k : all) {
    if (used_r[k.r] || used_c[k.c]) continue;
    used_r[k.r] = used_c[k.c] = true;
    out.pairs.emplace_back(k.r, k.c);
    out.matched += k.matched;
  }
  return out;
}

/// F1 over matched y-values after greedy series alignment.
inline double soft_value_match(const std::vector<DataSeries>& ref, const std::vector<DataSeries>& cand,
                               const Tolerance& tol = {}) {
  std::size_t ref_count = 0;
  std::size_t cand_count = 0;
  for (const auto& s : ref) ref_count += s.y.size();
  for (const auto& s : cand) cand_count += s.y.size();
  if (ref_count == 0 && cand_count == 0) return 1.0;
  if (ref_count == 0 || cand_count == 0) return 0.0;
  const std::size_t matched = align_series_greedy(ref, cand, tol).matched;
  if (matched == 0) return 0.0;
  const double precision = static_cast<double>(matched) / static_cast<double>(cand_count);
  const double recall = static_cast<double>(matched) / static_cast<double>(ref_count);
  return 2.0 * precision * recall / (precision + recall);
}

/// Multiset F1 over chart types: 2·Σ_k min(ref_k, cand_k) / (|ref| + |cand|).
inline double type_match(const std::vector<ChartType>& ref, const std::vector<ChartType>& cand) {
  if (ref.empty() && cand.empty()) return 1.0;
  std::array<std::size_t, kChartTypeCount> rc{}, cc{};
  for (auto t : ref) ++rc[static_cast<std::size_t>(t)];
  for (auto t : cand) ++cc[static_cast<std::size_t>(t)];
  std::size_t matched = 0;
  for (std::size_t k = 0; k < kChartTypeCount; ++k) matched += std::min(rc[k], cc[k]);
  return 2.0 * static_cast<double>(matched) / static_cast<double>(ref.size() + cand.size());
}

inline double layout_match(const LayoutSpec& ref, const LayoutSpec& cand) {
  return ref.nrows == cand.nrows && ref.ncols == cand.ncols ? 1.0 : 0.0;
}

inline double execution_reward(const RenderStatus& status) { return status.ok() ? 1.0 : 0.0; }

namespace detail {

/// Running mean over optional-string comparisons. Absent on both sides is
/// skipped; absent on one side scores 0.
class TextAverager {
 public:
  void add(const std::optional<std::string>& ref, const std::optional<std::string>& cand) {
    if (!ref && !cand) return;
    sum_ += (ref && cand) ? text_similarity(*ref, *cand) : 0.0;
    ++n_;
  }
  double value() const { return n_ == 0 ? 1.0 : sum_ / static_cast<double>(n_); }

 private:
  double sum_ = 0.0;
  std::size_t n_ = 0;
};

template <class T>
std::optional<std::string> at(const std::vector<T>& v, std::size_t i) {
  if (i >= v.size()) return std::nullopt;
  return v[i];
}

}  // namespace detail

inline double title_score(const ChartSpec& ref, const ChartSpec& cand) {
  detail::TextAverager avg;
  const std::size_t n = std::max(ref.text.title.size(), cand.text.title.size());
  for (std::size_t i = 0; i < n; ++i) avg.add(detail::at(ref.text.title, i), detail::at(cand.text.title, i));
  return avg.value();
}

inline double labels_score(const ChartSpec& ref, const ChartSpec& cand) {
  detail::TextAverager avg;
  const std::size_t axes = std::max(ref.text.x_label.size(), cand.text.x_label.size());
  for (std::size_t i = 0; i < axes; ++i) {
    avg.add(detail::at(ref.text.x_label, i), detail::at(cand.text.x_label, i));
    avg.add(detail::at(ref.text.y_label, i), detail::at(cand.text.y_label, i));
  }
  const std::size_t legends = std::max(ref.text.legend_labels.size(), cand.text.legend_labels.size());
  for (std::size_t i = 0; i < legends; ++i) {
    avg.add(detail::at(ref.text.legend_labels, i), detail::at(cand.text.legend_labels, i));
  }
  return avg.value();
}

/// Σ w_k·c_k / Σ w_k. The weights already sum to 1 within 1e-12; dividing
/// by their floating-point sum makes a perfect match score exactly 1.
inline double weighted_accuracy(const TextualBreakdown& b, const TextualWeights& w) {
  const auto c = b.components();
  const auto ws = w.as_array();
  double acc = 0.0;
  double wsum = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    acc += c[k] * ws[k];
    wsum += ws[k];
  }
  return std::min(1.0, acc / wsum);
}

/// Textual breakdown of a parsed candidate against the reference.
inline TextualBreakdown textual_reward(const ChartSpec& ref, const ChartSpec& cand, const TextualWeights& w = {},
                                       const Tolerance& tol = {}) {
  TextualBreakdown b;
  b.data_score = soft_value_match(ref.series, cand.series, tol);
  b.type_score = type_match(identify_chart_types(ref), identify_chart_types(cand));
  b.layout_score = layout_match(ref.layout, cand.layout);
  b.title_score = title_score(ref, cand);
  b.labels_score = labels_score(ref, cand);
  b.accuracy = weighted_accuracy(b, w);
  return b;
}

/// A candidate that failed to parse (nullopt) scores 0 on every component.
inline TextualBreakdown textual_reward(const ChartSpec& ref, const std::optional<ChartSpec>& cand,
                                       const TextualWeights& w = {}, const Tolerance& tol = {}) {
  if (!cand) return TextualBreakdown{};
  return textual_reward(ref, *cand, w, tol);
}

}  // namespace chartrl
