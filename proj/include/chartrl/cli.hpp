#pragma once

// The `chartrl` command line: score, batch-eval, filter, split, grpo-sim.
// Exit codes: 0 success, 2 validation/configuration, 3 infrastructure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "chartrl/config.hpp"
#include "chartrl/corpus.hpp"
#include "chartrl/digest.hpp"
#include "chartrl/grpo.hpp"
#include "chartrl/http_clients.hpp"
#include "chartrl/judge.hpp"
#include "chartrl/render.hpp"
#include "chartrl/reward_engine.hpp"

namespace chartrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInfrastructure = 3;

/// Options shared by every subcommand. Flags left unset defer to the
/// environment, then the config file, then built-in defaults.
struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir;
  bool stub_renderer = false;
  bool offline_judge = false;
  std::vector<std::string> overrides;  // "key=value", config-file keys
};

inline void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "TOML-style config file");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_flag("--stub-renderer", o.stub_renderer, "use the deterministic offline renderer");
  cmd->add_flag("--offline-judge", o.offline_judge, "use the pixel-difference judge");
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set stage.stage1.w_exec=0.25 (repeatable)");
}

/// "key=value" with a config-file key; bare non-numeric values are strings.
inline ConfigEntry parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + kv + "'");
  const std::string key = detail::trim(kv.substr(0, eq));
  const std::string value = detail::trim(kv.substr(eq + 1));
  std::vector<ConfigEntry> e;
  try {
    e = parse_config_text(key + " = " + value);
  } catch (const ValidationError&) {
    e = parse_config_text(key + " = \"" + value + "\"");
  }
  if (e.size() != 1) throw ValidationError("--set expects key=value, got '" + kv + "'");
  return e.front();
}

inline AppConfig resolve_config(const CommonOptions& o) {
  AppConfig cfg;
  if (!o.config_path.empty()) load_config_file(cfg, o.config_path);
  apply_environment(cfg);
  std::vector<ConfigEntry> overrides;
  for (const auto& kv : o.overrides) overrides.push_back(parse_override(kv));
  apply_config(cfg, overrides, StageMerge::edit);
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ValidationError("cannot write " + path.string());
}

inline std::filesystem::path require_out_dir(const CommonOptions& o) {
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  std::filesystem::create_directories(o.out_dir);
  return o.out_dir;
}

/// Renderer and judge chosen from flags and endpoints, created on demand so
/// stages that need neither never demand an endpoint.
class Services {
 public:
  Services(const CommonOptions& o, const AppConfig& cfg) : opts_(o), cfg_(cfg) {}

  Renderer& renderer() {
    if (!cache_) {
      if (opts_.stub_renderer) {
        base_renderer_ = std::make_unique<StubRenderer>();
      } else if (!cfg_.renderer.endpoint.empty()) {
        base_renderer_ = std::make_unique<HttpRenderer>(cfg_.renderer);
      } else {
        throw ValidationError("no renderer configured: set RENDERER_URL, renderer.endpoint, or pass --stub-renderer");
      }
      cache_ = std::make_unique<CachingRenderer>(*base_renderer_);
    }
    return *cache_;
  }

  JudgeClient& judge() {
    if (!bounded_) {
      if (opts_.offline_judge) {
        base_judge_ = std::make_unique<PixelJudge>();
      } else if (!cfg_.judge.endpoint.empty()) {
        base_judge_ = std::make_unique<HttpJudgeClient>(cfg_.judge);
      } else {
        throw ValidationError("no judge configured: set JUDGE_URL, judge.endpoint, or pass --offline-judge");
      }
      bounded_ = std::make_unique<BoundedJudge>(*base_judge_, cfg_.judge.max_in_flight);
    }
    return *bounded_;
  }

  /// Fills renderer/judge only when the stage's weights need them.
  ScoringDeps deps_for(const Stage& stage) {
    ScoringDeps d;
    d.textual_weights = cfg_.textual_weights;
    d.tolerance = cfg_.tolerance;
    d.judge_config = cfg_.judge;
    d.templates = &PromptTemplates::shipped();
    if (stage.weights.w_exec > 0.0 || stage.weights.w_vis > 0.0) d.renderer = &renderer();
    if (stage.weights.w_vis > 0.0) {
      d.judge = &judge();
      d.templates->get(cfg_.judge.prompt_template_id);
    }
    return d;
  }

 private:
  const CommonOptions& opts_;
  const AppConfig& cfg_;
  std::unique_ptr<Renderer> base_renderer_;
  std::unique_ptr<CachingRenderer> cache_;
  std::unique_ptr<JudgeClient> base_judge_;
  std::unique_ptr<BoundedJudge> bounded_;
};

inline std::string format_fixed(double v, int digits = 3) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

struct ScoreArgs {
  CommonOptions common;
  std::string ref, cand, stage = "stage1";
};

inline int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const AppConfig cfg = resolve_config(a.common);
  const Stage& stage = cfg.schedule.find(a.stage);
  Services services(a.common, cfg);
  ScoringDeps deps = services.deps_for(stage);
  CorpusRecord ref{"ref", read_text(a.ref), std::nullopt, {}};
  const PlotScript cand{read_text(a.cand), ScriptOrigin::candidate};
  RewardBreakdown b = score_sample(ref, cand, stage.name, cfg.schedule, deps);
  nlohmann::json j = to_json(b);
  if (!a.common.out_dir.empty()) write_text(require_out_dir(a.common) / "score.json", j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return b.unscored ? kExitInfrastructure : kExitOk;
}

struct BatchArgs {
  CommonOptions common;
  std::string refs, cands, stage = "stage1";
};

inline int cmd_batch_eval(const BatchArgs& a, std::ostream& out) {
  const AppConfig cfg = resolve_config(a.common);
  const auto dir = require_out_dir(a.common);
  const Stage& stage = cfg.schedule.find(a.stage);
  Services services(a.common, cfg);
  ScoringDeps deps = services.deps_for(stage);
  const auto refs = read_corpus(a.refs);
  const auto cands = read_corpus(a.cands);
  deps.image_root = std::filesystem::path(a.refs).parent_path();
  const BatchReport rep = evaluate_corpus(refs, cands, stage.name, cfg.schedule, deps, cfg.workers);
  write_report(rep, dir);
  out << "n=" << rep.n << " scored=" << rep.scored << " exec_rate=" << format_fixed(rep.exec_rate)
      << " mean_total=" << format_fixed(rep.means.count("total") ? rep.means.at("total") : 0.0) << '\n';
  return kExitOk;
}

struct FilterArgs {
  CommonOptions common;
  std::string input;
  std::string judge_scores;
  bool skip_visual = false;
  bool resume = false;
  std::optional<double> threshold;
  std::optional<std::size_t> target_size;
  std::optional<std::size_t> uniform_cap;
};

inline int cmd_filter(const FilterArgs& a, std::ostream& out) {
  AppConfig cfg = resolve_config(a.common);
  if (a.threshold) cfg.quality_threshold = *a.threshold;
  if (a.target_size) cfg.caps.target_size = *a.target_size;
  if (a.uniform_cap) cfg.caps.uniform = *a.uniform_cap;
  cfg.validate();
  const auto dir = require_out_dir(a.common);
  const auto corpus = read_corpus(a.input);

  FilterResult code = filter_code_content(corpus, cfg.caps, cfg.workers);
  std::vector<FilterDecision> log = code.decisions;
  std::vector<CorpusRecord> kept = code.kept;

  if (!a.skip_visual) {
    std::vector<FilterDecision> prior;
    const auto partial_log = dir / "decisions.jsonl.partial";
    if (a.resume && std::filesystem::exists(partial_log)) prior = read_decision_log(partial_log);

    Services services(a.common, cfg);
    std::unique_ptr<QualityJudge> judge;
    if (!a.judge_scores.empty()) {
      auto j = nlohmann::json::parse(read_text(a.judge_scores), nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw ValidationError("judge scores must be a JSON object of id -> score");
      std::map<std::string, double> scores;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number()) throw ValidationError("judge score for " + it.key() + " is not a number");
        scores[it.key()] = it.value().get<double>();
      }
      judge = std::make_unique<ScriptedQualityJudge>(std::move(scores));
    } else {
      judge = std::make_unique<ClientQualityJudge>(services.judge(), cfg.judge);
    }
    VisualFilterResult vis = filter_visual_quality(kept, services.renderer(), *judge, cfg.quality_threshold, prior,
                                                   std::filesystem::path(a.input).parent_path(), cfg.workers);
    log.insert(log.end(), vis.decisions.begin(), vis.decisions.end());
    if (vis.halted) {
      write_decision_log(partial_log, log);
      write_corpus(dir / "kept.jsonl.partial", vis.kept);
      throw JudgeUnavailable("visual-quality stage halted (" + vis.halt_reason + "); rerun with --resume");
    }
    kept = std::move(vis.kept);
    std::filesystem::remove(partial_log);
    std::filesystem::remove(dir / "kept.jsonl.partial");
  }

  write_decision_log(dir / "decisions.jsonl", log);
  write_corpus(dir / "kept.jsonl", kept);
  out << "input=" << corpus.size() << " after_code=" << code.kept.size() << " kept=" << kept.size() << '\n';
  return kExitOk;
}

struct SplitArgs {
  CommonOptions common;
  std::string input;
  std::vector<std::size_t> budgets;
  std::optional<double> rl_fraction;
};

inline int cmd_split(const SplitArgs& a, std::ostream& out) {
  const AppConfig cfg = resolve_config(a.common);
  const auto dir = require_out_dir(a.common);
  const auto kept = read_corpus(a.input);
  std::size_t s1 = 0;
  std::size_t s2 = 0;
  if (!a.budgets.empty()) {
    if (a.budgets.size() != 2) throw ValidationError("--budgets takes two counts");
    s1 = a.budgets[0];
    s2 = a.budgets[1];
  } else if (a.rl_fraction) {
    std::tie(s1, s2) = budgets_from_fraction(kept.size(), *a.rl_fraction);
  } else {
    throw ValidationError("split needs --budgets or --rl-fraction");
  }
  const CorpusSplit split = split_corpus(kept, s1, s2, cfg.seed);
  write_corpus(dir / "rl_stage1.jsonl", split.rl_stage1);
  write_corpus(dir / "rl_stage2.jsonl", split.rl_stage2);
  write_corpus(dir / "sft.jsonl", split.sft);
  write_text(dir / "manifest.json", split.manifest.dump(2) + "\n");
  out << "rl_stage1=" << split.rl_stage1.size() << " rl_stage2=" << split.rl_stage2.size()
      << " sft=" << split.sft.size() << '\n';
  return kExitOk;
}

struct GrpoArgs {
  CommonOptions common;
  std::string task;
  std::optional<int> iterations;
  std::string single_stage;
};

inline int cmd_grpo_sim(const GrpoArgs& a, std::ostream& out) {
  AppConfig cfg = resolve_config(a.common);
  if (a.iterations) cfg.grpo_iterations = *a.iterations;
  cfg.validate();
  const auto dir = require_out_dir(a.common);
  auto task_json = nlohmann::json::parse(read_text(a.task), nullptr, false);
  if (task_json.is_discarded()) throw ValidationError("toy task is not valid JSON");
  const ToyTask task = toy_task_from_json(task_json);

  StageSchedule schedule = cfg.schedule;
  if (!a.single_stage.empty()) {
    Stage only = schedule.find(a.single_stage);
    for (const auto& s : schedule.stages) only.sample_budget += s.name == only.name ? 0 : s.sample_budget;
    schedule.stages = {only};
  }
  Services services(a.common, cfg);
  ScoringDeps deps;
  deps.textual_weights = cfg.textual_weights;
  deps.tolerance = cfg.tolerance;
  deps.judge_config = cfg.judge;
  deps.templates = &PromptTemplates::shipped();
  for (const auto& s : schedule.stages) {
    if (s.weights.w_exec > 0.0 || s.weights.w_vis > 0.0) deps.renderer = &services.renderer();
    if (s.weights.w_vis > 0.0) deps.judge = &services.judge();
  }
  const ScoredPool pool = score_pool(task, schedule, deps, cfg.workers);
  const auto trace = run_toy_curriculum(task, schedule, pool, cfg.grpo, {cfg.grpo_iterations, cfg.seed});
  const std::string text = trace_jsonl(trace);
  write_text(dir / "trace.jsonl", text);
  const TraceRecord& first = trace.front();
  const TraceRecord& last = trace.back();
  const nlohmann::json summary = {{"seed", cfg.seed},
                                  {"iterations", cfg.grpo_iterations},
                                  {"stages", nlohmann::json::array()},
                                  {"initial_mean_reward", first.mean_reward},
                                  {"final_mean_reward", last.mean_reward},
                                  {"final_exec_rate", last.exec_rate},
                                  {"final_mean_textual", last.mean_textual},
                                  {"trace_sha256", sha256_hex(text)}};
  nlohmann::json s = summary;
  for (const auto& st : schedule.stages) s["stages"].push_back(st.name);
  write_text(dir / "summary.json", s.dump(2) + "\n");
  out << "iterations=" << cfg.grpo_iterations << " initial=" << format_fixed(first.mean_reward, 4)
      << " final=" << format_fixed(last.mean_reward, 4) << " trace_sha256=" << sha256_hex(text) << '\n';
  return kExitOk;
}

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rule-based and judge-based rewards for chart-to-code generation"};
  app.name("chartrl");
  app.require_subcommand(1);

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "score one candidate script against a reference");
  add_common(c_score, score.common);
  c_score->add_option("--ref", score.ref, "reference script")->required();
  c_score->add_option("--cand", score.cand, "candidate script")->required();
  c_score->add_option("--stage", score.stage, "schedule stage")->capture_default_str();

  BatchArgs batch;
  auto* c_batch = app.add_subcommand("batch-eval", "score a candidate corpus against a reference corpus");
  add_common(c_batch, batch.common);
  c_batch->add_option("--refs", batch.refs, "reference corpus (.jsonl)")->required();
  c_batch->add_option("--cands", batch.cands, "candidate corpus (.jsonl)")->required();
  c_batch->add_option("--stage", batch.stage, "schedule stage")->capture_default_str();

  FilterArgs filter;
  auto* c_filter = app.add_subcommand("filter", "curate an RL corpus");
  add_common(c_filter, filter.common);
  c_filter->add_option("--input", filter.input, "input corpus (.jsonl)")->required();
  c_filter->add_option("--judge-scores", filter.judge_scores, "JSON object of record id -> quality in [0,1]");
  c_filter->add_flag("--skip-visual", filter.skip_visual, "run only the code-content stage");
  c_filter->add_flag("--resume", filter.resume, "reuse decisions from a halted run");
  c_filter->add_option("--threshold", filter.threshold, "visual-quality threshold");
  c_filter->add_option("--target-size", filter.target_size, "target corpus size for default type caps");
  c_filter->add_option("--uniform-cap", filter.uniform_cap, "cap applied to every chart type");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "split a kept corpus into RL stages and SFT");
  add_common(c_split, split.common);
  c_split->add_option("--input", split.input, "kept corpus (.jsonl)")->required();
  auto* budgets = c_split->add_option("--budgets", split.budgets, "stage-one and stage-two counts")->delimiter(',');
  c_split->add_option("--rl-fraction", split.rl_fraction, "fraction of records for RL")->excludes(budgets);

  GrpoArgs grpo;
  auto* c_grpo = app.add_subcommand("grpo-sim", "train the toy policy under the stage schedule");
  add_common(c_grpo, grpo.common);
  c_grpo->add_option("--task", grpo.task, "toy task (.json)")->required();
  c_grpo->add_option("--iterations", grpo.iterations, "training iterations");
  c_grpo->add_option("--single-stage", grpo.single_stage, "collapse the schedule into this one stage");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*c_score) return cmd_score(score, out);
    if (*c_batch) return cmd_batch_eval(batch, out);
    if (*c_filter) return cmd_filter(filter, out);
    if (*c_split) return cmd_split(split, out);
    if (*c_grpo) return cmd_grpo_sim(grpo, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InfrastructureError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfrastructure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace chartrl::cli
