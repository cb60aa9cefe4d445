#pragma once

// Total reward R = w_text_total·R_text + w_vis·R_vis + w_exec·R_exec, the
// staged weight schedule, per-sample scoring and batch reports.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chartrl/corpus_record.hpp"
#include "chartrl/detail/parallel.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/judge.hpp"
#include "chartrl/normalizer.hpp"
#include "chartrl/png_image.hpp"
#include "chartrl/render.hpp"
#include "chartrl/textual_reward.hpp"

namespace chartrl {

struct RewardWeights {
  double w_text_total = 1.0;
  double w_vis = 0.0;
  double w_exec = 0.5;

  double sum() const { return w_text_total + w_vis + w_exec; }

  void validate() const {
    for (double w : {w_text_total, w_vis, w_exec}) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("reward weights must be finite and non-negative");
    }
    if (!(sum() > 0.0)) throw ValidationError("at least one reward weight must be positive");
  }
};

struct Stage {
  std::string name;
  RewardWeights weights;
  long long sample_budget = 0;
};

struct StageSchedule {
  std::vector<Stage> stages;

  /// Textual-only first stage, hybrid second stage.
  static StageSchedule two_stage() {
    return {{{"stage1", {1.0, 0.0, 0.5}, 22000}, {"stage2", {0.5, 0.5, 0.5}, 11000}}};
  }

  void validate() const {
    if (stages.empty()) throw ValidationError("stage schedule is empty");
    std::set<std::string> names;
    for (const auto& s : stages) {
      if (s.name.empty()) throw ValidationError("stage without a name");
      if (!names.insert(s.name).second) throw ValidationError("duplicate stage '" + s.name + "'");
      if (s.sample_budget < 0) throw ValidationError("stage '" + s.name + "' has a negative budget");
      s.weights.validate();
    }
  }

  const Stage& find(const std::string& name) const {
    for (const auto& s : stages) {
      if (s.name == name) return s;
    }
    throw ValidationError("stage not found: " + name);
  }
};

inline double total_reward(double text, double vis, double exec, const RewardWeights& w) {
  return w.w_text_total * text + w.w_vis * vis + w.w_exec * exec;
}

struct RewardBreakdown {
  TextualBreakdown textual;
  std::optional<double> visual;  // nullopt: not requested by the stage, or unscored
  std::optional<int> exec;       // nullopt: renderer not invoked
  std::optional<double> total;   // nullopt iff unscored
  std::string stage;
  bool parsed = false;
  bool unscored = false;
  int judge_calls = 0;
  std::vector<std::string> diagnostics;
};

/// Collaborators for scoring. The renderer and judge must be thread-safe
/// when used from evaluate_corpus with several workers.
struct ScoringDeps {
  Renderer* renderer = nullptr;
  JudgeClient* judge = nullptr;
  JudgeConfig judge_config;
  const PromptTemplates* templates = nullptr;
  TextualWeights textual_weights;
  Tolerance tolerance;
  std::filesystem::path image_root;  // base for CorpusRecord::image_path
};

namespace detail {

inline std::optional<ImageBytes> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return ImageBytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// The reference chart: the record's image file when present, else a
/// render of the reference code.
inline std::optional<ImageBytes> reference_image(const CorpusRecord& ref, ScoringDeps& deps) {
  if (ref.image_path) {
    if (auto bytes = read_file_bytes(deps.image_root / *ref.image_path)) return bytes;
  }
  RenderStatus st = deps.renderer->render(ref.script(ScriptOrigin::reference));
  if (!st.ok()) return std::nullopt;
  return st.image;
}

}  // namespace detail

/// Scores one candidate against a reference under the named stage. The
/// renderer runs only when w_exec or w_vis is positive; the judge only when
/// w_vis is positive and the candidate rendered. Infrastructure failures
/// leave the sample unscored rather than scoring it 0.
inline RewardBreakdown score_sample(const CorpusRecord& ref, const PlotScript& cand, const std::string& stage_name,
                                    const StageSchedule& schedule, ScoringDeps& deps) {
  const Stage& stage = schedule.find(stage_name);
  const RewardWeights& w = stage.weights;
  RewardBreakdown out;
  out.stage = stage.name;

  ChartSpec ref_spec;
  try {
    ref_spec = parse(ref.script(ScriptOrigin::reference));
  } catch (const ParseError& e) {
    throw ValidationError("reference " + ref.id + " does not parse: " + e.what());
  }
  std::optional<ChartSpec> cand_spec;
  try {
    cand_spec = parse(cand);
    out.parsed = true;
  } catch (const ParseError& e) {
    out.diagnostics.push_back(std::string("candidate parse error: ") + e.what());
  }
  out.textual = textual_reward(ref_spec, cand_spec, deps.textual_weights, deps.tolerance);

  std::optional<RenderStatus> render;
  if (w.w_exec > 0.0 || w.w_vis > 0.0) {
    if (!deps.renderer) throw ValidationError("stage '" + stage.name + "' needs a renderer but none is configured");
    try {
      render = deps.renderer->render(cand);
    } catch (const RendererUnavailable& e) {
      out.unscored = true;
      out.diagnostics.push_back(std::string("renderer unavailable: ") + e.what());
      return out;
    }
    out.exec = render->ok() ? 1 : 0;
    out.textual.exec_success = render->ok();
    if (!render->ok() && !render->error_message.empty()) {
      out.diagnostics.push_back(std::string(to_string(render->outcome)) + ": " + render->error_message);
    }
  }

  if (w.w_vis > 0.0) {
    if (!deps.judge) throw ValidationError("stage '" + stage.name + "' needs a judge but none is configured");
    if (!render->ok()) {
      out.visual = 0.0;
    } else {
      std::optional<ImageBytes> ref_image;
      try {
        ref_image = detail::reference_image(ref, deps);
      } catch (const RendererUnavailable& e) {
        out.unscored = true;
        out.diagnostics.push_back(std::string("renderer unavailable: ") + e.what());
        return out;
      }
      if (!ref_image) {
        out.unscored = true;
        out.diagnostics.push_back("reference image unavailable for " + ref.id);
        return out;
      }
      const PromptTemplates& templates = deps.templates ? *deps.templates : PromptTemplates::shipped();
      VisualResult v = visual_reward(*ref_image, *render, *deps.judge, deps.judge_config, templates, ref.id);
      out.judge_calls = v.judge_calls;
      for (auto& d : v.diagnostics) out.diagnostics.push_back(std::move(d));
      if (v.unscored()) {
        out.unscored = true;
        return out;
      }
      out.visual = v.reward;
    }
  }

  out.total = total_reward(out.textual.accuracy, out.visual.value_or(0.0), out.exec.value_or(0), w);
  return out;
}

struct ReportRow {
  std::string id;
  RewardBreakdown breakdown;
};

struct BatchReport {
  static constexpr int kBins = 20;

  std::size_t n = 0;
  std::size_t scored = 0;
  double exec_rate = 0.0;
  std::map<std::string, double> means;  // over scored rows
  std::array<std::size_t, kBins> histogram{};
  double histogram_max = 0.0;  // upper edge of the last bin, w_sum
  std::string stage;
  std::vector<ReportRow> rows;  // sorted by id
};

/// Bin index for `total` over [0, upper] split into BatchReport::kBins
/// uniform bins; the upper edge falls in the last bin.
inline int histogram_bin(double total, double upper) {
  if (!(upper > 0.0)) return 0;
  const int k = static_cast<int>(std::floor(total / upper * BatchReport::kBins));
  return std::clamp(k, 0, BatchReport::kBins - 1);
}

/// Scores every candidate against the reference with the same id. Rows are
/// sorted by id; the reduce is single-threaded, so the report depends only
/// on the inputs and the (deterministic) collaborators.
inline BatchReport evaluate_corpus(const std::vector<CorpusRecord>& refs, const std::vector<CorpusRecord>& cands,
                                   const std::string& stage_name, const StageSchedule& schedule, ScoringDeps& deps,
                                   int workers = 1) {
  if (refs.empty() || cands.empty()) throw ValidationError("cannot evaluate an empty corpus");
  const Stage& stage = schedule.find(stage_name);
  std::map<std::string, const CorpusRecord*> by_id;
  for (const auto& r : refs) by_id[r.id] = &r;
  std::set<std::string> cand_ids;
  for (const auto& c : cands) cand_ids.insert(c.id);
  std::vector<std::string> missing;
  for (const auto& [id, _] : by_id) {
    if (!cand_ids.count(id)) missing.push_back("candidate for " + id);
  }
  for (const auto& id : cand_ids) {
    if (!by_id.count(id)) missing.push_back("reference for " + id);
  }
  if (!missing.empty()) {
    std::string msg = "corpora do not align by id; missing:";
    for (const auto& m : missing) msg += " " + m + ";";
    msg.pop_back();
    throw ValidationError(msg);
  }

  std::vector<const CorpusRecord*> order;
  for (const auto& c : cands) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  BatchReport rep;
  rep.stage = stage.name;
  rep.n = order.size();
  rep.rows.resize(order.size());
  detail::parallel_for(order.size(), workers, [&](std::size_t i) {
    const CorpusRecord& c = *order[i];
    rep.rows[i] = {c.id, score_sample(*by_id.at(c.id), c.script(ScriptOrigin::candidate), stage.name, schedule, deps)};
  });

  rep.histogram_max = stage.weights.sum();
  std::size_t exec_ok = 0;
  std::map<std::string, double> sums;
  std::map<std::string, std::size_t> counts;
  auto add = [&](const std::string& key, double v) {
    sums[key] += v;
    ++counts[key];
  };
  for (const auto& row : rep.rows) {
    const RewardBreakdown& b = row.breakdown;
    if (b.exec.value_or(0) == 1) ++exec_ok;
    if (b.unscored) continue;
    ++rep.scored;
    const auto c = b.textual.components();
    add("data", c[0]);
    add("type", c[1]);
    add("layout", c[2]);
    add("title", c[3]);
    add("labels", c[4]);
    add("accuracy", b.textual.accuracy);
    if (b.visual) add("visual", *b.visual);
    if (b.exec) add("exec", *b.exec);
    add("total", *b.total);
    ++rep.histogram[static_cast<std::size_t>(histogram_bin(*b.total, rep.histogram_max))];
  }
  rep.exec_rate = static_cast<double>(exec_ok) / static_cast<double>(rep.n);
  for (const auto& [k, s] : sums) rep.means[k] = s / static_cast<double>(counts[k]);
  return rep;
}

inline nlohmann::json to_json(const RewardBreakdown& b) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {
      {"textual",
       {{"data", b.textual.data_score},
        {"type", b.textual.type_score},
        {"layout", b.textual.layout_score},
        {"title", b.textual.title_score},
        {"labels", b.textual.labels_score},
        {"accuracy", b.textual.accuracy}}},
      {"visual", opt(b.visual)},
      {"exec", opt(b.exec)},
      {"total", opt(b.total)},
      {"stage", b.stage},
      {"parsed", b.parsed},
      {"unscored", b.unscored},
      {"judge_calls", b.judge_calls},
      {"diagnostics", b.diagnostics},
  };
}

inline nlohmann::json summary_json(const BatchReport& r) {
  return {
      {"schema", "reward-report/1"},
      {"stage", r.stage},
      {"n", r.n},
      {"scored", r.scored},
      {"exec_rate", r.exec_rate},
      {"means", r.means},
      {"histogram", {{"bins", BatchReport::kBins}, {"min", 0.0}, {"max", r.histogram_max}, {"counts", r.histogram}}},
  };
}

/// Writes report.jsonl (one row per sample) and summary.json into `dir`.
inline void write_report(const BatchReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream rows(dir / "report.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto& row : r.rows) {
    nlohmann::json j = to_json(row.breakdown);
    j["id"] = row.id;
    j["schema"] = "reward-report/1";
    rows << j.dump() << '\n';
  }
  std::ofstream summary(dir / "summary.json", std::ios::binary | std::ios::trunc);
  summary << summary_json(r).dump(2) << '\n';
  if (!rows || !summary) throw ValidationError("cannot write report into " + dir.string());
}

}  // namespace chartrl
