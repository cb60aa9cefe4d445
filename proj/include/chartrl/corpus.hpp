#pragma once

// RL-corpus curation: code-content filter (data format, per-type caps),
// visual-quality filter, and seeded RL/SFT splitting.

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chartrl/corpus_record.hpp"
#include "chartrl/detail/parallel.hpp"
#include "chartrl/detail/rng.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/judge.hpp"
#include "chartrl/normalizer.hpp"
#include "chartrl/render.hpp"

namespace chartrl {

enum class FilterStage { chart_type, data_format, visual_quality };

inline std::string_view to_string(FilterStage s) {
  switch (s) {
    case FilterStage::chart_type: return "chart_type";
    case FilterStage::data_format: return "data_format";
    case FilterStage::visual_quality: return "visual_quality";
  }
  return "chart_type";
}

inline FilterStage filter_stage_from_string(std::string_view s) {
  if (s == "chart_type") return FilterStage::chart_type;
  if (s == "data_format") return FilterStage::data_format;
  if (s == "visual_quality") return FilterStage::visual_quality;
  throw ValidationError("unknown filter stage: " + std::string(s));
}

struct FilterDecision {
  std::string record_id;
  FilterStage stage = FilterStage::data_format;
  bool keep = false;
  std::string reason;  // "ok" for keeps
  std::string detail;

  friend bool operator==(const FilterDecision&, const FilterDecision&) = default;
};

inline nlohmann::json to_json(const FilterDecision& d) {
  return {{"record_id", d.record_id},
          {"stage", to_string(d.stage)},
          {"verdict", d.keep ? "keep" : "drop"},
          {"reason", d.reason},
          {"detail", d.detail}};
}

inline FilterDecision decision_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("record_id") || !j.contains("stage") || !j.contains("verdict")) {
    throw ValidationError("malformed decision log entry");
  }
  FilterDecision d;
  d.record_id = j["record_id"].get<std::string>();
  d.stage = filter_stage_from_string(j["stage"].get<std::string>());
  d.keep = j["verdict"].get<std::string>() == "keep";
  d.reason = j.value("reason", std::string{});
  d.detail = j.value("detail", std::string{});
  return d;
}

inline std::vector<FilterDecision> read_decision_log(const std::filesystem::path& path) {
  std::vector<FilterDecision> out;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError("invalid decision log line in " + path.string());
    out.push_back(decision_from_json(j));
  }
  return out;
}

inline void write_decision_log(const std::filesystem::path& path, const std::vector<FilterDecision>& decisions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& d : decisions) out << to_json(d).dump() << '\n';
  if (!out) throw ValidationError("cannot write " + path.string());
}

struct FilterResult {
  std::vector<CorpusRecord> kept;
  std::vector<FilterDecision> decisions;
};

/// Per-type caps: an explicit per-type cap wins, then a uniform cap, then
/// ceil(target_size / distinct types). With none of these, unlimited.
struct DiversityCaps {
  std::map<std::string, std::size_t> per_type;
  std::optional<std::size_t> uniform;
  std::optional<std::size_t> target_size;

  std::optional<std::size_t> cap_for(const std::string& type, std::size_t distinct_types) const {
    if (auto it = per_type.find(type); it != per_type.end()) return it->second;
    if (uniform) return *uniform;
    if (target_size && distinct_types > 0) return (*target_size + distinct_types - 1) / distinct_types;
    return std::nullopt;
  }
};

/// Keeps records whose data literals are flat (1-D arrays or non-nested
/// dicts), then applies per-type caps in input order. A record counts
/// against every distinct type it draws and is kept only if all of those
/// types are under their caps. Meta is recomputed on every record.
inline FilterResult filter_code_content(const std::vector<CorpusRecord>& corpus, const DiversityCaps& caps = {},
                                        int workers = 1) {
  std::vector<CorpusRecord> records = corpus;
  detail::parallel_for(records.size(), workers, [&](std::size_t i) { populate_meta(records[i]); });

  FilterResult out;
  std::vector<const CorpusRecord*> survivors;
  for (const auto& r : records) {
    if (r.meta.data_format == "flat_ok") {
      out.decisions.push_back({r.id, FilterStage::data_format, true, "ok", "flat_ok"});
      survivors.push_back(&r);
    } else if (r.meta.data_format == "parse_error") {
      out.decisions.push_back({r.id, FilterStage::data_format, false, "parse", ""});
    } else {
      out.decisions.push_back({r.id, FilterStage::data_format, false, "data_format", r.meta.data_format});
    }
  }

  std::set<std::string> distinct;
  for (const auto* r : survivors) distinct.insert(r->meta.chart_types.begin(), r->meta.chart_types.end());
  std::map<std::string, std::size_t> counts;
  for (const auto* r : survivors) {
    const std::set<std::string> types(r->meta.chart_types.begin(), r->meta.chart_types.end());
    if (types.empty()) {
      out.decisions.push_back({r->id, FilterStage::chart_type, false, "no_chart_type", ""});
      continue;
    }
    std::string full;
    for (const auto& t : types) {
      const auto cap = caps.cap_for(t, distinct.size());
      if (cap && counts[t] >= *cap) {
        full = t;
        break;
      }
    }
    if (!full.empty()) {
      out.decisions.push_back({r->id, FilterStage::chart_type, false, "type_cap", full});
      continue;
    }
    for (const auto& t : types) ++counts[t];
    out.decisions.push_back({r->id, FilterStage::chart_type, true, "ok", ""});
    out.kept.push_back(*r);
  }
  return out;
}

struct VisualFilterResult {
  std::vector<CorpusRecord> kept;
  std::vector<FilterDecision> decisions;
  bool halted = false;
  std::string halt_reason;
};

/// Renders each record (or reads its image) and keeps it iff the quality
/// judge scores it at or above `threshold`. Unrenderable records drop with
/// reason "render". Decisions in `prior` (from a halted run) are reused
/// without rendering or judging. The first JudgeUnavailable, in input
/// order, halts the stage: decisions before it are returned and
/// `halted` is set.
inline VisualFilterResult filter_visual_quality(const std::vector<CorpusRecord>& corpus, Renderer& renderer,
                                                QualityJudge& judge, double threshold = 0.7,
                                                const std::vector<FilterDecision>& prior = {},
                                                const std::filesystem::path& image_root = {}, int workers = 1) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("quality threshold must be in [0, 1]");
  std::map<std::string, FilterDecision> reuse;
  for (const auto& d : prior) {
    if (d.stage == FilterStage::visual_quality) reuse[d.record_id] = d;
  }

  struct Outcome {
    std::optional<FilterDecision> decision;
    std::string unavailable;
  };
  std::vector<Outcome> outcomes(corpus.size());
  std::atomic<bool> stop{false};
  detail::parallel_for(corpus.size(), workers, [&](std::size_t i) {
    const CorpusRecord& r = corpus[i];
    if (auto it = reuse.find(r.id); it != reuse.end()) {
      outcomes[i].decision = it->second;
      return;
    }
    if (stop.load()) {
      outcomes[i].unavailable = "not attempted";
      return;
    }
    std::optional<ImageBytes> image;
    if (r.image_path) {
      std::ifstream in(image_root / *r.image_path, std::ios::binary);
      if (in) image = ImageBytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    try {
      if (!image) {
        RenderStatus st = renderer.render(r.script(ScriptOrigin::reference));
        if (!st.ok()) {
          outcomes[i].decision = FilterDecision{r.id, FilterStage::visual_quality, false, "render",
                                                std::string(to_string(st.outcome))};
          return;
        }
        image = std::move(st.image);
      }
      const double q = judge.quality(*image, r.id);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", q);
      outcomes[i].decision =
          FilterDecision{r.id, FilterStage::visual_quality, q >= threshold, q >= threshold ? "ok" : "quality", buf};
    } catch (const InfrastructureError& e) {
      outcomes[i].unavailable = e.what();
      stop.store(true);
    }
  });

  VisualFilterResult out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!outcomes[i].decision) {
      out.halted = true;
      out.halt_reason = "record " + corpus[i].id + ": " + outcomes[i].unavailable;
      break;
    }
    out.decisions.push_back(*outcomes[i].decision);
    if (outcomes[i].decision->keep) out.kept.push_back(corpus[i]);
  }
  return out;
}

struct CorpusSplit {
  std::vector<CorpusRecord> rl_stage1;
  std::vector<CorpusRecord> rl_stage2;
  std::vector<CorpusRecord> sft;
  nlohmann::json manifest;
};

/// Seeded shuffle, then the first `stage1` records go to RL stage one, the
/// next `stage2` to stage two and the rest to SFT.
inline CorpusSplit split_corpus(const std::vector<CorpusRecord>& kept, std::size_t stage1, std::size_t stage2,
                                std::uint64_t seed) {
  if (stage1 + stage2 > kept.size()) {
    throw ValidationError("split budgets " + std::to_string(stage1) + "+" + std::to_string(stage2) + " exceed " +
                          std::to_string(kept.size()) + " records");
  }
  std::vector<std::size_t> order(kept.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  PortableRng rng(seed);
  portable_shuffle(order, rng);
  CorpusSplit s;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const CorpusRecord& r = kept[order[k]];
    if (k < stage1) s.rl_stage1.push_back(r);
    else if (k < stage1 + stage2) s.rl_stage2.push_back(r);
    else s.sft.push_back(r);
  }
  s.manifest = {{"seed", seed},
                {"input", kept.size()},
                {"rl_stage1", s.rl_stage1.size()},
                {"rl_stage2", s.rl_stage2.size()},
                {"sft", s.sft.size()}};
  return s;
}

/// Budgets from an RL fraction: floor(fraction·n) RL records divided
/// between the stages in the default 2:1 ratio.
inline std::pair<std::size_t, std::size_t> budgets_from_fraction(std::size_t n, double rl_fraction) {
  if (!(rl_fraction >= 0.0 && rl_fraction <= 1.0)) throw ValidationError("rl_fraction must be in [0, 1]");
  const auto rl = static_cast<std::size_t>(std::floor(rl_fraction * static_cast<double>(n)));
  const std::size_t s1 = static_cast<std::size_t>(std::llround(static_cast<double>(rl) * 2.0 / 3.0));
  return {s1, rl - s1};
}

}  // namespace chartrl
