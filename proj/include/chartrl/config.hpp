#pragma once

// Run configuration: built-in defaults, overridden by a TOML-style
// key/value file, overridden by environment endpoints, overridden by flags.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "chartrl/corpus.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/grpo.hpp"
#include "chartrl/http_clients.hpp"
#include "chartrl/judge.hpp"
#include "chartrl/reward_engine.hpp"
#include "chartrl/textual_reward.hpp"

namespace chartrl {

using ConfigValue = std::variant<std::string, double, bool>;

struct ConfigEntry {
  std::string key;  // "section.key"
  ConfigValue value;
  int line = 0;
};

/// Subset of TOML: `[section]` / `[a.b]` headers, `key = value` with
/// double-quoted strings, numbers and booleans, `#` comments.
inline std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ValidationError("config line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line;
    bool quoted = false;
    for (char c : raw) {
      if (c == '"') quoted = !quoted;
      if (c == '#' && !quoted) break;
      line.push_back(c);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) fail("expected key = value");
    ConfigEntry e{section.empty() ? key : section + "." + key, {}, lineno};
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"') fail("unterminated string");
      e.value = val.substr(1, val.size() - 2);
    } else if (val == "true" || val == "false") {
      e.value = val == "true";
    } else {
      char* end = nullptr;
      const double d = std::strtod(val.c_str(), &end);
      if (end == val.c_str() || *end != '\0') fail("cannot parse value '" + val + "'");
      e.value = d;
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct AppConfig {
  TextualWeights textual_weights;
  Tolerance tolerance;
  StageSchedule schedule = StageSchedule::two_stage();
  JudgeConfig judge;
  RendererConfig renderer;
  GrpoConfig grpo;
  int grpo_iterations = 300;
  double quality_threshold = 0.7;
  DiversityCaps caps;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const {
    textual_weights.validate();
    tolerance.validate();
    schedule.validate();
    judge.validate();
    grpo.validate();
    if (workers < 1) throw ValidationError("workers must be >= 1");
    if (grpo_iterations < 0) throw ValidationError("grpo.iterations must be >= 0");
    if (!(quality_threshold >= 0.0 && quality_threshold <= 1.0)) throw ValidationError("filter.threshold must be in [0, 1]");
  }
};

namespace detail {

inline double as_number(const ConfigEntry& e) {
  if (auto* d = std::get_if<double>(&e.value)) return *d;
  throw ValidationError("config line " + std::to_string(e.line) + ": " + e.key + " must be a number");
}

inline long long as_integer(const ConfigEntry& e) {
  const double d = as_number(e);
  if (d != std::floor(d) || std::fabs(d) > 9e15) {
    throw ValidationError("config line " + std::to_string(e.line) + ": " + e.key + " must be an integer");
  }
  return static_cast<long long>(d);
}

inline std::size_t as_count(const ConfigEntry& e) {
  const long long v = as_integer(e);
  if (v < 0) throw ValidationError("config line " + std::to_string(e.line) + ": " + e.key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

inline std::string as_string(const ConfigEntry& e) {
  if (auto* s = std::get_if<std::string>(&e.value)) return *s;
  throw ValidationError("config line " + std::to_string(e.line) + ": " + e.key + " must be a string");
}

}  // namespace detail

enum class StageMerge { replace, edit };

/// Applies entries over `cfg`. Unknown keys are errors. With
/// StageMerge::replace any `stage.NAME.*` key replaces the whole schedule
/// (stages keep entry order); with StageMerge::edit the keys edit the current
/// stages in place and unknown names append a new stage.
inline void apply_config(AppConfig& cfg, const std::vector<ConfigEntry>& entries,
                         StageMerge merge = StageMerge::replace) {
  using namespace detail;
  std::vector<Stage> stages;
  if (merge == StageMerge::edit) stages = cfg.schedule.stages;
  auto stage_named = [&](const std::string& name) -> Stage& {
    for (auto& s : stages) {
      if (s.name == name) return s;
    }
    stages.push_back({name, {0.0, 0.0, 0.0}, 0});
    return stages.back();
  };
  for (const auto& e : entries) {
    const std::string& k = e.key;
    if (k == "reward.data") cfg.textual_weights.data = as_number(e);
    else if (k == "reward.type") cfg.textual_weights.type = as_number(e);
    else if (k == "reward.layout") cfg.textual_weights.layout = as_number(e);
    else if (k == "reward.title") cfg.textual_weights.title = as_number(e);
    else if (k == "reward.labels") cfg.textual_weights.labels = as_number(e);
    else if (k == "tolerance.rel_eps") cfg.tolerance.rel_eps = as_number(e);
    else if (k == "tolerance.abs_floor") cfg.tolerance.abs_floor = as_number(e);
    else if (k.rfind("stage.", 0) == 0 && k.find('.', 6) != std::string::npos) {
      const auto dot = k.find('.', 6);
      Stage& s = stage_named(k.substr(6, dot - 6));
      const std::string field = k.substr(dot + 1);
      if (field == "w_text_total") s.weights.w_text_total = as_number(e);
      else if (field == "w_vis") s.weights.w_vis = as_number(e);
      else if (field == "w_exec") s.weights.w_exec = as_number(e);
      else if (field == "budget") s.sample_budget = as_integer(e);
      else throw ValidationError("config line " + std::to_string(e.line) + ": unknown key " + k);
    }
    else if (k == "judge.endpoint") cfg.judge.endpoint = as_string(e);
    else if (k == "judge.model") cfg.judge.model_name = as_string(e);
    else if (k == "judge.max_retries") cfg.judge.max_retries = static_cast<int>(as_integer(e));
    else if (k == "judge.timeout_ms") cfg.judge.request_timeout_ms = static_cast<int>(as_integer(e));
    else if (k == "judge.template") cfg.judge.prompt_template_id = as_string(e);
    else if (k == "judge.max_in_flight") cfg.judge.max_in_flight = static_cast<int>(as_integer(e));
    else if (k == "renderer.endpoint") cfg.renderer.endpoint = as_string(e);
    else if (k == "renderer.timeout_ms") cfg.renderer.timeout_ms = static_cast<int>(as_integer(e));
    else if (k == "renderer.dpi") cfg.renderer.dpi = static_cast<int>(as_integer(e));
    else if (k == "grpo.clip_eps") cfg.grpo.clip_eps = as_number(e);
    else if (k == "grpo.group_size") cfg.grpo.group_size = static_cast<int>(as_integer(e));
    else if (k == "grpo.kl_coefficient") cfg.grpo.kl_coefficient = as_number(e);
    else if (k == "grpo.learning_rate") cfg.grpo.learning_rate = as_number(e);
    else if (k == "grpo.ppo_epochs") cfg.grpo.ppo_epochs = static_cast<int>(as_integer(e));
    else if (k == "grpo.iterations") cfg.grpo_iterations = static_cast<int>(as_integer(e));
    else if (k == "grpo.zero_std_policy") {
      const std::string v = as_string(e);
      if (v == "zero_advantages") cfg.grpo.zero_std_policy = ZeroStdPolicy::zero_advantages;
      else if (v == "epsilon_denominator") cfg.grpo.zero_std_policy = ZeroStdPolicy::epsilon_denominator;
      else throw ValidationError("config line " + std::to_string(e.line) + ": unknown zero_std_policy " + v);
    }
    else if (k == "filter.threshold") cfg.quality_threshold = as_number(e);
    else if (k == "filter.target_size") cfg.caps.target_size = as_count(e);
    else if (k == "filter.uniform_cap") cfg.caps.uniform = as_count(e);
    else if (k.rfind("filter.cap.", 0) == 0) cfg.caps.per_type[k.substr(11)] = as_count(e);
    else if (k == "run.seed") cfg.seed = static_cast<std::uint64_t>(as_count(e));
    else if (k == "run.workers") cfg.workers = static_cast<int>(as_integer(e));
    else throw ValidationError("config line " + std::to_string(e.line) + ": unknown key " + k);
  }
  if (!stages.empty()) cfg.schedule.stages = std::move(stages);
}

inline void load_config_file(AppConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config(cfg, parse_config_text(ss.str()));
}

/// JUDGE_URL and RENDERER_URL override file endpoints.
inline void apply_environment(AppConfig& cfg) {
  if (const char* v = std::getenv("JUDGE_URL"); v && *v) cfg.judge.endpoint = v;
  if (const char* v = std::getenv("RENDERER_URL"); v && *v) cfg.renderer.endpoint = v;
}

}  // namespace chartrl
