#pragma once

// Group-relative advantages, the clipped surrogate objective and a softmax
// tabular toy policy trained over a fixed candidate pool per prompt.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "chartrl/corpus_record.hpp"
#include "chartrl/detail/rng.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/reward_engine.hpp"

namespace chartrl {

enum class ZeroStdPolicy { zero_advantages, epsilon_denominator };

struct GrpoConfig {
  double clip_eps = 0.2;
  int group_size = 8;
  double kl_coefficient = 0.0;
  ZeroStdPolicy zero_std_policy = ZeroStdPolicy::zero_advantages;
  double epsilon = 1e-8;
  double learning_rate = 0.15;
  int ppo_epochs = 2;  // surrogate ascent steps per sampled batch

  void validate() const {
    if (!(clip_eps > 0.0)) throw ValidationError("clip_eps must be positive");
    if (group_size < 2) throw ValidationError("group_size must be at least 2");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (ppo_epochs < 1) throw ValidationError("ppo_epochs must be at least 1");
    if (!std::isfinite(kl_coefficient) || kl_coefficient < 0.0) throw ValidationError("kl_coefficient must be >= 0");
  }
};

/// A_i = (r_i - mean) / std with the population standard deviation. When
/// std < epsilon the zero-std policy applies.
inline std::vector<double> normalize_advantages(const std::vector<double>& rewards, const GrpoConfig& cfg = {}) {
  if (rewards.size() < 2) throw ValidationError("a group needs at least two rewards");
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ValidationError("rewards must be finite");
    mean += r;
  }
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < cfg.epsilon) {
    if (cfg.zero_std_policy == ZeroStdPolicy::zero_advantages) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + cfg.epsilon);
    return adv;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

struct RolloutGroup {
  std::vector<double> rewards;
  std::vector<double> logprob_new;  // summed sequence log-probabilities
  std::vector<double> logprob_old;
};

inline double clip_term(double ratio, double adv, double eps) {
  return std::min(ratio * adv, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

/// (1/G) Σ min(ρ_i A_i, clip(ρ_i, 1-ε, 1+ε) A_i), minus kl_coefficient times
/// the mean k3 estimate of KL(new || old) when that coefficient is nonzero.
inline double clipped_objective(const RolloutGroup& g, const GrpoConfig& cfg = {}) {
  const std::size_t n = g.rewards.size();
  if (g.logprob_new.size() != n || g.logprob_old.size() != n) throw ValidationError("rollout group vectors differ in length");
  const auto adv = normalize_advantages(g.rewards, cfg);
  double sum = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = g.logprob_new[i] - g.logprob_old[i];
    const double ratio = std::exp(d);
    if (!std::isfinite(ratio)) throw ValidationError("non-finite importance ratio");
    sum += clip_term(ratio, adv[i], cfg.clip_eps);
    kl += std::exp(-d) + d - 1.0;
  }
  const double gn = static_cast<double>(n);
  return sum / gn - cfg.kl_coefficient * kl / gn;
}

/// Softmax over a fixed candidate pool per prompt.
struct ToyPolicy {
  std::vector<std::vector<double>> logits;  // [prompt][action]
  std::vector<std::vector<std::string>> candidates;

  static ToyPolicy uniform(std::vector<std::vector<std::string>> pools) {
    ToyPolicy p;
    for (const auto& pool : pools) {
      if (pool.size() < 2) throw ValidationError("each prompt needs at least two candidates");
      p.logits.emplace_back(pool.size(), 0.0);
    }
    p.candidates = std::move(pools);
    return p;
  }

  std::vector<double> probs(std::size_t prompt) const { return softmax(logits.at(prompt)); }

  double logprob(std::size_t prompt, std::size_t action) const { return log_softmax(logits.at(prompt))[action]; }

  static std::vector<double> log_softmax(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] - lse;
    return out;
  }

  static std::vector<double> softmax(const std::vector<double>& z) {
    auto out = log_softmax(z);
    for (double& v : out) v = std::exp(v);
    return out;
  }
};

/// G sampled actions for one prompt with their rewards and the behaviour
/// policy's log-probabilities.
struct ToyGroup {
  std::size_t prompt = 0;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> logprob_old;
};

inline RolloutGroup rollout_group(const ToyPolicy& policy, const ToyGroup& g) {
  RolloutGroup r{g.rewards, {}, g.logprob_old};
  const auto lp = ToyPolicy::log_softmax(policy.logits.at(g.prompt));
  for (auto a : g.actions) r.logprob_new.push_back(lp.at(a));
  return r;
}

/// Mean clipped objective over groups.
inline double toy_objective(const ToyPolicy& policy, const std::vector<ToyGroup>& groups, const GrpoConfig& cfg = {}) {
  if (groups.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : groups) s += clipped_objective(rollout_group(policy, g), cfg);
  return s / static_cast<double>(groups.size());
}

/// Analytic gradient of toy_objective with respect to every logit.
/// d lp(a) / d z_b = [a == b] - π(b); a term contributes only while its
/// unclipped branch attains the min.
inline std::vector<std::vector<double>> policy_gradient(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                                                        const GrpoConfig& cfg = {}) {
  std::vector<std::vector<double>> grad;
  for (const auto& z : policy.logits) grad.emplace_back(z.size(), 0.0);
  if (groups.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    const auto adv = normalize_advantages(g.rewards, cfg);
    const auto lp = ToyPolicy::log_softmax(policy.logits.at(g.prompt));
    const double gn = static_cast<double>(g.actions.size());
    auto& row = grad[g.prompt];
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const std::size_t a = g.actions[i];
      const double d = lp[a] - g.logprob_old[i];
      const double ratio = std::exp(d);
      const bool in_band = ratio >= 1.0 - cfg.clip_eps && ratio <= 1.0 + cfg.clip_eps;
      const bool unclipped_wins =
          in_band || ratio * adv[i] < std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv[i];
      double dlp = unclipped_wins ? adv[i] * ratio : 0.0;
      dlp -= cfg.kl_coefficient * (1.0 - std::exp(-d));
      dlp *= scale / gn;
      for (std::size_t b = 0; b < row.size(); ++b) {
        row[b] += dlp * ((a == b ? 1.0 : 0.0) - std::exp(lp[b]));
      }
    }
  }
  return grad;
}

struct ToyPrompt {
  CorpusRecord reference;
  std::vector<std::string> candidates;
};

struct ToyTask {
  std::vector<ToyPrompt> prompts;
};

/// ToyTask as JSON: {"prompts": [{"id", "reference", "candidates": [...]}]}.
inline ToyTask toy_task_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("prompts") || !j["prompts"].is_array()) {
    throw ValidationError("toy task needs a 'prompts' array");
  }
  ToyTask t;
  for (const auto& p : j["prompts"]) {
    if (!p.is_object() || !p.contains("id") || !p["id"].is_string() || !p.contains("reference") ||
        !p["reference"].is_string() || !p.contains("candidates") || !p["candidates"].is_array()) {
      throw ValidationError("toy prompt needs string 'id', string 'reference' and a 'candidates' array");
    }
    ToyPrompt tp;
    tp.reference.id = p["id"].get<std::string>();
    tp.reference.code = p["reference"].get<std::string>();
    for (const auto& c : p["candidates"]) {
      if (!c.is_string()) throw ValidationError("toy candidates must be strings");
      tp.candidates.push_back(c.get<std::string>());
    }
    if (tp.candidates.size() < 2) throw ValidationError("toy prompt '" + tp.reference.id + "' needs >= 2 candidates");
    t.prompts.push_back(std::move(tp));
  }
  if (t.prompts.empty()) throw ValidationError("toy task has no prompts");
  return t;
}

struct TraceRecord {
  int iteration = 0;
  std::string stage;
  double mean_reward = 0.0;  // policy-expected total under the stage weights
  double exec_rate = 0.0;    // policy-expected execution success
  double mean_textual = 0.0; // policy-expected textual accuracy
  double sampled_reward = 0.0;  // mean over the rollouts drawn this iteration
};

inline nlohmann::json to_json(const TraceRecord& r) {
  return {{"iteration", r.iteration},       {"stage", r.stage},
          {"mean_reward", r.mean_reward},   {"exec_rate", r.exec_rate},
          {"mean_textual", r.mean_textual}, {"sampled_reward", r.sampled_reward}};
}

struct CurriculumOptions {
  int iterations = 300;
  std::uint64_t seed = 7;
};

/// Per-candidate scores under every stage of the schedule. Unscored
/// candidates carry nullopt and are dropped from the groups they land in.
struct ScoredPool {
  // [stage][prompt][candidate]
  std::vector<std::vector<std::vector<std::optional<double>>>> total;
  std::vector<std::vector<double>> textual;  // [prompt][candidate]
  std::vector<std::vector<int>> exec;        // [prompt][candidate]
};

inline ScoredPool score_pool(const ToyTask& task, const StageSchedule& schedule, ScoringDeps& deps, int workers = 1) {
  ScoredPool pool;
  pool.total.resize(schedule.stages.size());
  for (auto& s : pool.total) s.resize(task.prompts.size());
  pool.textual.resize(task.prompts.size());
  pool.exec.resize(task.prompts.size());
  struct Job {
    std::size_t stage, prompt, cand;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < task.prompts.size(); ++p) {
    const std::size_t n = task.prompts[p].candidates.size();
    pool.textual[p].resize(n);
    pool.exec[p].resize(n);
    for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
      pool.total[s][p].resize(n);
      for (std::size_t c = 0; c < n; ++c) jobs.push_back({s, p, c});
    }
  }
  std::vector<RewardBreakdown> results(jobs.size());
  detail::parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    const ToyPrompt& tp = task.prompts[j.prompt];
    results[i] = score_sample(tp.reference, PlotScript{tp.candidates[j.cand], ScriptOrigin::candidate},
                              schedule.stages[j.stage].name, schedule, deps);
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& j = jobs[i];
    const RewardBreakdown& b = results[i];
    pool.total[j.stage][j.prompt][j.cand] = b.total;
    pool.textual[j.prompt][j.cand] = b.textual.accuracy;
    if (b.exec) pool.exec[j.prompt][j.cand] = *b.exec;
  }
  return pool;
}

/// Iterations per stage, proportional to the sample budgets; the rounding
/// remainder goes to the last stage.
inline std::vector<int> stage_iterations(const StageSchedule& schedule, int iterations) {
  long long budget = 0;
  for (const auto& s : schedule.stages) budget += s.sample_budget;
  std::vector<int> out;
  int used = 0;
  for (std::size_t k = 0; k < schedule.stages.size(); ++k) {
    int n = 0;
    if (k + 1 == schedule.stages.size()) {
      n = iterations - used;
    } else if (budget > 0) {
      n = static_cast<int>(std::llround(static_cast<double>(iterations) * static_cast<double>(schedule.stages[k].sample_budget) /
                                        static_cast<double>(budget)));
    } else {
      n = iterations / static_cast<int>(schedule.stages.size());
    }
    n = std::clamp(n, 0, iterations - used);
    out.push_back(n);
    used += n;
  }
  return out;
}

/// Trains a uniform-initialized toy policy: each iteration samples G
/// rollouts per prompt, scores them with the current stage's weights,
/// normalizes within groups and takes `ppo_epochs` ascent steps on the
/// clipped surrogate. The trace holds one record per iteration 0..N, where
/// record N is the final policy.
inline std::vector<TraceRecord> run_toy_curriculum(const ToyTask& task, const StageSchedule& schedule,
                                                   const ScoredPool& pool, const GrpoConfig& cfg,
                                                   const CurriculumOptions& opt) {
  cfg.validate();
  schedule.validate();
  if (opt.iterations < 0) throw ValidationError("iterations must be >= 0");
  std::vector<std::vector<std::string>> pools;
  for (const auto& p : task.prompts) pools.push_back(p.candidates);
  ToyPolicy policy = ToyPolicy::uniform(pools);
  PortableRng rng(opt.seed);

  const auto per_stage = stage_iterations(schedule, opt.iterations);
  std::vector<std::size_t> stage_of;
  for (std::size_t s = 0; s < per_stage.size(); ++s) stage_of.insert(stage_of.end(), static_cast<std::size_t>(per_stage[s]), s);
  const std::size_t last_stage = schedule.stages.size() - 1;

  auto expected = [&](std::size_t stage, int it, double sampled) {
    TraceRecord r;
    r.iteration = it;
    r.stage = schedule.stages[stage].name;
    r.sampled_reward = sampled;
    const double np = static_cast<double>(task.prompts.size());
    for (std::size_t p = 0; p < task.prompts.size(); ++p) {
      const auto pr = policy.probs(p);
      for (std::size_t c = 0; c < pr.size(); ++c) {
        r.mean_reward += pr[c] * pool.total[stage][p][c].value_or(0.0) / np;
        r.mean_textual += pr[c] * pool.textual[p][c] / np;
        r.exec_rate += pr[c] * pool.exec[p][c] / np;
      }
    }
    return r;
  };

  std::vector<TraceRecord> trace;
  for (int it = 0; it < opt.iterations; ++it) {
    const std::size_t stage = stage_of[static_cast<std::size_t>(it)];
    std::vector<ToyGroup> groups;
    double sampled = 0.0;
    std::size_t sampled_n = 0;
    for (std::size_t p = 0; p < task.prompts.size(); ++p) {
      const auto pr = policy.probs(p);
      const auto lp = ToyPolicy::log_softmax(policy.logits[p]);
      ToyGroup g;
      g.prompt = p;
      for (int i = 0; i < cfg.group_size; ++i) {
        const std::size_t a = rng.categorical(pr);
        const auto& r = pool.total[stage][p][a];
        if (!r) continue;
        g.actions.push_back(a);
        g.rewards.push_back(*r);
        g.logprob_old.push_back(lp[a]);
        sampled += *r;
        ++sampled_n;
      }
      if (g.actions.size() >= 2) groups.push_back(std::move(g));
    }
    trace.push_back(expected(stage, it, sampled_n ? sampled / static_cast<double>(sampled_n) : 0.0));
    for (int e = 0; e < cfg.ppo_epochs; ++e) {
      const auto grad = policy_gradient(policy, groups, cfg);
      for (std::size_t p = 0; p < grad.size(); ++p) {
        for (std::size_t k = 0; k < grad[p].size(); ++k) policy.logits[p][k] += cfg.learning_rate * grad[p][k];
      }
    }
  }
  trace.push_back(expected(opt.iterations > 0 ? stage_of.back() : last_stage, opt.iterations, 0.0));
  return trace;
}

inline std::string trace_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) out += to_json(r).dump() + "\n";
  return out;
}

}  // namespace chartrl
