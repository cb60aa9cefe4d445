#pragma once

// Judge-model plumbing for the visual reward: prompt construction, verdict
// parsing, offline judges and the retrying visual_reward entry point.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chartrl/digest.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/png_image.hpp"
#include "chartrl/render_status.hpp"

#ifndef CHARTRL_TEMPLATE_DIR
#define CHARTRL_TEMPLATE_DIR "templates"
#endif

namespace chartrl {

inline constexpr std::array<std::string_view, 6> kJudgeAspects = {"chart_type", "layout", "text_content",
                                                                  "data",       "style",  "clarity"};

struct JudgeVerdict {
  std::array<int, 6> aspect_scores{};  // in kJudgeAspects order, each 0..10
  std::string raw_response;
  std::vector<std::string> diagnostics;

  int sum() const {
    int s = 0;
    for (int v : aspect_scores) s += v;
    return s;
  }
  double normalized() const { return static_cast<double>(sum()) / 60.0; }
};

struct JudgeConfig {
  std::string endpoint;
  std::string model_name = "judge";
  int max_retries = 2;
  int request_timeout_ms = 60000;
  std::string prompt_template_id = "judge_pair_v1";
  int max_in_flight = 8;

  void validate() const {
    if (max_retries < 0) throw ValidationError("judge.max_retries must be >= 0");
    if (request_timeout_ms <= 0) throw ValidationError("judge.request_timeout_ms must be positive");
    if (max_in_flight <= 0) throw ValidationError("judge.max_in_flight must be positive");
  }
};

/// Versioned prompt texts, one file per id (`<id>.txt`).
class PromptTemplates {
 public:
  PromptTemplates() = default;

  static PromptTemplates load_directory(const std::filesystem::path& dir) {
    PromptTemplates t;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      t.add(entry.path().stem().string(), ss.str());
    }
    return t;
  }

  static const PromptTemplates& shipped() {
    static const PromptTemplates t = load_directory(CHARTRL_TEMPLATE_DIR);
    return t;
  }

  void add(std::string id, std::string text) { texts_[std::move(id)] = std::move(text); }

  /// Throws ValidationError for an unknown id.
  const std::string& get(const std::string& id) const {
    auto it = texts_.find(id);
    if (it == texts_.end()) throw ValidationError("unknown prompt template: " + id);
    return it->second;
  }

  bool contains(const std::string& id) const { return texts_.count(id) != 0; }

 private:
  std::map<std::string, std::string> texts_;
};

/// One judge call. `payload` is the serialized chat-completion body; the
/// images ride along so offline judges need not dig them out of it.
struct JudgeRequest {
  std::string payload;
  std::vector<ImageBytes> images;
  std::string subject_id;
};

/// Transport to a judge model. Returns the model's reply text; throws
/// JudgeUnavailable on transport failure. Shared across workers.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const JudgeRequest& request) = 0;
};

namespace detail {

inline nlohmann::json image_part(const ImageBytes& png) {
  return {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}};
}

inline nlohmann::json text_part(const std::string& text) { return {{"type", "text"}, {"text", text}}; }

inline std::string chat_payload(const JudgeConfig& cfg, const std::string& instruction,
                                const std::vector<std::pair<std::string, const ImageBytes*>>& images) {
  nlohmann::json content = nlohmann::json::array();
  content.push_back(text_part(instruction));
  for (const auto& [caption, img] : images) {
    content.push_back(text_part(caption));
    content.push_back(image_part(*img));
  }
  nlohmann::json body = {
      {"model", cfg.model_name},
      {"temperature", 0},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
  };
  return body.dump();
}

}  // namespace detail

/// Deterministic pairwise request: instruction, then the reference and the
/// candidate image as two inline slots (never deduplicated).
inline JudgeRequest build_judge_prompt(const ImageBytes& ref_image, const ImageBytes& cand_image,
                                       const JudgeConfig& cfg = {},
                                       const PromptTemplates& templates = PromptTemplates::shipped()) {
  const std::string& instruction = templates.get(cfg.prompt_template_id);
  decode_png(ref_image);
  decode_png(cand_image);
  JudgeRequest req;
  req.payload = detail::chat_payload(cfg, instruction,
                                     {{"Reference chart:", &ref_image}, {"Candidate chart:", &cand_image}});
  req.images = {ref_image, cand_image};
  return req;
}

namespace detail {

/// Offset of the '}' closing the object opened at `start`, honoring JSON
/// string quoting.
inline std::optional<std::size_t> object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::nullopt;
}

inline std::optional<long long> integral(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) return static_cast<long long>(d);
  }
  return std::nullopt;
}

/// Calls `accept` on each well-formed JSON object embedded in `text`, in
/// order, until it returns true.
template <class F>
bool scan_objects(std::string_view text, F&& accept) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
    auto end = object_end(text, pos);
    if (!end) continue;
    auto obj = nlohmann::json::parse(text.substr(pos, *end - pos + 1), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) continue;
    if (accept(obj)) return true;
  }
  return false;
}

inline int clamp_score(long long v, std::string_view field, std::vector<std::string>& diagnostics) {
  if (v >= 0 && v <= 10) return static_cast<int>(v);
  diagnostics.push_back("clamped " + std::string(field) + "=" + std::to_string(v));
  return v < 0 ? 0 : 10;
}

}  // namespace detail

/// First embedded object carrying all six aspects as integers wins.
/// Out-of-range scores are clamped into 0..10 with a diagnostic.
inline JudgeVerdict parse_judge_response(std::string_view text) {
  JudgeVerdict verdict;
  const bool found = detail::scan_objects(text, [&](const nlohmann::json& obj) {
    std::array<long long, 6> raw{};
    for (std::size_t k = 0; k < kJudgeAspects.size(); ++k) {
      auto it = obj.find(std::string(kJudgeAspects[k]));
      if (it == obj.end()) return false;
      auto v = detail::integral(*it);
      if (!v) return false;
      raw[k] = *v;
    }
    for (std::size_t k = 0; k < raw.size(); ++k) {
      verdict.aspect_scores[k] = detail::clamp_score(raw[k], kJudgeAspects[k], verdict.diagnostics);
    }
    return true;
  });
  if (!found) throw MalformedVerdict("judge response has no six-aspect integer object");
  verdict.raw_response = std::string(text);
  return verdict;
}

inline std::string verdict_json(const std::array<int, 6>& scores) {
  nlohmann::json o = nlohmann::json::object();
  for (std::size_t k = 0; k < kJudgeAspects.size(); ++k) o[std::string(kJudgeAspects[k])] = scores[k];
  return o.dump();
}

/// Counts calls into another client.
class CountingJudge : public JudgeClient {
 public:
  explicit CountingJudge(JudgeClient& inner) : inner_(inner) {}
  std::string complete(const JudgeRequest& request) override {
    calls_.fetch_add(1);
    return inner_.complete(request);
  }
  int calls() const { return calls_.load(); }

 private:
  JudgeClient& inner_;
  std::atomic<int> calls_{0};
};

/// Test judge: verdicts keyed by the SHA-256 of the candidate (last) image.
/// Unknown digests get `fallback`, or JudgeUnavailable when none is set.
class ScriptedJudge : public JudgeClient {
 public:
  explicit ScriptedJudge(std::optional<std::array<int, 6>> fallback = std::nullopt) : fallback_(fallback) {}

  void script(const ImageBytes& candidate, std::array<int, 6> scores) {
    verdicts_[sha256_hex(candidate)] = verdict_json(scores);
  }
  void script_raw(const ImageBytes& candidate, std::string reply) { verdicts_[sha256_hex(candidate)] = std::move(reply); }

  std::string complete(const JudgeRequest& request) override {
    calls_.fetch_add(1);
    if (!request.images.empty()) {
      auto it = verdicts_.find(sha256_hex(request.images.back()));
      if (it != verdicts_.end()) return it->second;
    }
    if (fallback_) return verdict_json(*fallback_);
    throw JudgeUnavailable("scripted judge has no verdict for this image");
  }

  int calls() const { return calls_.load(); }

 private:
  std::map<std::string, std::string> verdicts_;
  std::optional<std::array<int, 6>> fallback_;
  std::atomic<int> calls_{0};
};

/// Offline fallback similarity: the fraction of "ink" pixels (non-white in
/// either image) whose channels all agree within `tolerance`. The candidate
/// is resampled to the reference size.
inline double pixel_similarity(const Raster& ref, const Raster& cand, int tolerance = 24) {
  if (ref.width == 0 || ref.height == 0) return cand.width == 0 || cand.height == 0 ? 1.0 : 0.0;
  if (cand.width == 0 || cand.height == 0) return 0.0;
  std::size_t ink = 0;
  std::size_t agree = 0;
  for (int y = 0; y < ref.height; ++y) {
    const int cy = static_cast<int>(static_cast<long long>(y) * cand.height / ref.height);
    for (int x = 0; x < ref.width; ++x) {
      const int cx = static_cast<int>(static_cast<long long>(x) * cand.width / ref.width);
      const auto* a = &ref.rgb[(static_cast<std::size_t>(y) * static_cast<std::size_t>(ref.width) + static_cast<std::size_t>(x)) * 3];
      const auto* b = &cand.rgb[(static_cast<std::size_t>(cy) * static_cast<std::size_t>(cand.width) + static_cast<std::size_t>(cx)) * 3];
      bool blank = true;
      int worst = 0;
      for (int k = 0; k < 3; ++k) {
        blank = blank && a[k] == 255 && b[k] == 255;
        worst = std::max(worst, std::abs(static_cast<int>(a[k]) - static_cast<int>(b[k])));
      }
      if (blank) continue;
      ++ink;
      agree += worst <= tolerance ? 1 : 0;
    }
  }
  return ink == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(ink);
}

/// Reports round(10 * pixel_similarity) for all six aspects.
class PixelJudge : public JudgeClient {
 public:
  std::string complete(const JudgeRequest& request) override {
    if (request.images.size() != 2) throw MalformedVerdict("pixel judge needs two images");
    const double sim = pixel_similarity(decode_png(request.images[0]), decode_png(request.images[1]));
    const int score = static_cast<int>(std::lround(std::clamp(sim, 0.0, 1.0) * 10.0));
    return verdict_json({score, score, score, score, score, score});
  }
};

/// Caps concurrent calls into the wrapped client.
class BoundedJudge : public JudgeClient {
 public:
  BoundedJudge(JudgeClient& inner, int max_in_flight)
      : inner_(inner), slots_(std::max(1, max_in_flight)) {}

  std::string complete(const JudgeRequest& request) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};
    return inner_.complete(request);
  }

 private:
  JudgeClient& inner_;
  std::counting_semaphore<> slots_;
};

/// Outcome of one visual scoring. `reward` is nullopt when the judge stayed
/// unavailable through every retry.
struct VisualResult {
  std::optional<double> reward;
  int judge_calls = 0;
  std::optional<JudgeVerdict> verdict;
  std::vector<std::string> diagnostics;

  bool unscored() const { return !reward.has_value(); }
};

/// 0 without a judge call when rendering failed; otherwise the verdict sum
/// over 60. Up to 1 + max_retries attempts; an attempt fails on transport
/// error or malformed reply. All-transport failure leaves the sample
/// unscored; any malformed reply among the failures scores 0.
inline VisualResult visual_reward(const ImageBytes& ref_image, const RenderStatus& cand_status, JudgeClient& judge,
                                  const JudgeConfig& cfg = {},
                                  const PromptTemplates& templates = PromptTemplates::shipped(),
                                  const std::string& subject_id = {}) {
  VisualResult out;
  if (!cand_status.ok() || !cand_status.image) {
    out.reward = 0.0;
    return out;
  }
  JudgeRequest req = build_judge_prompt(ref_image, *cand_status.image, cfg, templates);
  req.subject_id = subject_id;
  bool malformed = false;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    std::string reply;
    ++out.judge_calls;
    try {
      reply = judge.complete(req);
    } catch (const JudgeUnavailable& e) {
      out.diagnostics.push_back(std::string("judge unavailable: ") + e.what());
      continue;
    }
    try {
      JudgeVerdict v = parse_judge_response(reply);
      for (const auto& d : v.diagnostics) out.diagnostics.push_back(d);
      out.reward = v.normalized();
      out.verdict = std::move(v);
      return out;
    } catch (const MalformedVerdict& e) {
      malformed = true;
      out.diagnostics.push_back(std::string("malformed verdict: ") + e.what());
    }
  }
  if (malformed) out.reward = 0.0;
  return out;
}

/// Single-image curation judge used by the visual-quality filter. Returns a
/// score in [0,1]; throws JudgeUnavailable.
class QualityJudge {
 public:
  virtual ~QualityJudge() = default;
  virtual double quality(const ImageBytes& image, const std::string& record_id) = 0;
};

/// Test quality judge: scores keyed by record id.
class ScriptedQualityJudge : public QualityJudge {
 public:
  explicit ScriptedQualityJudge(std::map<std::string, double> scores = {}) : scores_(std::move(scores)) {}

  void script(const std::string& id, double score) { scores_[id] = score; }

  double quality(const ImageBytes&, const std::string& record_id) override {
    calls_.fetch_add(1);
    auto it = scores_.find(record_id);
    if (it == scores_.end()) throw JudgeUnavailable("no scripted quality for " + record_id);
    return it->second;
  }

  int calls() const { return calls_.load(); }

 private:
  std::map<std::string, double> scores_;
  std::atomic<int> calls_{0};
};

inline double parse_quality_response(std::string_view text) {
  std::optional<long long> q;
  detail::scan_objects(text, [&](const nlohmann::json& obj) {
    auto it = obj.find("quality");
    if (it == obj.end()) return false;
    q = detail::integral(*it);
    return q.has_value();
  });
  if (!q) throw MalformedVerdict("judge response has no integer quality field");
  return static_cast<double>(std::clamp<long long>(*q, 0, 10)) / 10.0;
}

/// Quality judging over any JudgeClient transport with the single-image
/// template. A malformed reply scores 0.
class ClientQualityJudge : public QualityJudge {
 public:
  ClientQualityJudge(JudgeClient& client, JudgeConfig cfg,
                     const PromptTemplates& templates = PromptTemplates::shipped())
      : client_(client), cfg_(std::move(cfg)), templates_(templates) {
    if (cfg_.prompt_template_id == "judge_pair_v1") cfg_.prompt_template_id = "judge_quality_v1";
    templates_.get(cfg_.prompt_template_id);
  }

  double quality(const ImageBytes& image, const std::string& record_id) override {
    decode_png(image);
    JudgeRequest req;
    req.payload = detail::chat_payload(cfg_, templates_.get(cfg_.prompt_template_id), {{"Chart:", &image}});
    req.images = {image};
    req.subject_id = record_id;
    bool malformed = false;
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      std::string reply;
      try {
        reply = client_.complete(req);
      } catch (const JudgeUnavailable& e) {
        last_error = e.what();
        continue;
      }
      try {
        return parse_quality_response(reply);
      } catch (const MalformedVerdict&) {
        malformed = true;
      }
    }
    if (!malformed) throw JudgeUnavailable(last_error);
    return 0.0;
  }

 private:
  JudgeClient& client_;
  JudgeConfig cfg_;
  const PromptTemplates& templates_;
};

}  // namespace chartrl
