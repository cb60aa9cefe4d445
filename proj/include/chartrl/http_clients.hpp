#pragma once

// HTTP transports for the render service and the judge endpoint.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <string>
#include <utility>

#include "chartrl/digest.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/judge.hpp"
#include "chartrl/render.hpp"

namespace chartrl {

struct HttpEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "/..." or empty
};

/// Splits "http://host:port/base" into origin and path. Throws
/// ValidationError for anything that is not http(s).
inline HttpEndpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint is not a URL: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ValidationError("unsupported endpoint scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  HttpEndpoint e;
  e.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) e.path = url.substr(path_start);
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  if (e.origin.size() <= scheme_end + 3) throw ValidationError("endpoint has no host: " + url);
  return e;
}

namespace detail {

inline void set_timeouts(httplib::Client& c, int timeout_ms) {
  const auto ms = std::chrono::milliseconds(timeout_ms);
  c.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(ms).count() + 1, 0);
  c.set_read_timeout(ms);
  c.set_write_timeout(ms);
}

}  // namespace detail

struct RendererConfig {
  std::string endpoint;
  int timeout_ms = 20000;
  int dpi = 100;

  void validate() const {
    if (timeout_ms < 1000 || timeout_ms > 120000) throw ValidationError("renderer.timeout_ms must be in [1000, 120000]");
    if (dpi <= 0) throw ValidationError("renderer.dpi must be positive");
  }
};

/// Client for the render service: POST /render {code, timeout_ms, dpi} ->
/// {outcome, image_b64, error_message, duration_ms}. Transport errors,
/// non-2xx statuses and undecodable bodies raise RendererUnavailable.
class HttpRenderer : public Renderer {
 public:
  explicit HttpRenderer(RendererConfig cfg) : cfg_(std::move(cfg)), url_(split_url(cfg_.endpoint)) { cfg_.validate(); }

  RenderStatus render(const PlotScript& script) override {
    httplib::Client client(url_.origin);
    // The service answers within 2x timeout_ms; leave headroom past that.
    detail::set_timeouts(client, 2 * cfg_.timeout_ms + 5000);
    const nlohmann::json req = {{"code", script.source}, {"timeout_ms", cfg_.timeout_ms}, {"dpi", cfg_.dpi}};
    auto res = client.Post(url_.path + "/render", req.dump(), "application/json");
    if (!res) throw RendererUnavailable("render service unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw RendererUnavailable("render service returned HTTP " + std::to_string(res->status));
    }
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw RendererUnavailable("render service sent a non-JSON body");

    const std::string outcome = body.value("outcome", std::string{});
    const std::int64_t ms = body.value("duration_ms", std::int64_t{0});
    const std::string message = body.contains("error_message") && body["error_message"].is_string()
                                    ? body["error_message"].get<std::string>()
                                    : std::string{};
    if (outcome == "ok") {
      if (!body.contains("image_b64") || !body["image_b64"].is_string()) {
        throw RendererUnavailable("render service reported ok without an image");
      }
      auto png = base64_decode(body["image_b64"].get<std::string>());
      if (!png || png->empty()) throw RendererUnavailable("render service sent an undecodable image");
      return RenderStatus::success(std::move(*png), ms);
    }
    if (outcome == "timeout") return RenderStatus::failure(RenderOutcome::timeout, message, ms);
    if (outcome == "parse_error") return RenderStatus::failure(RenderOutcome::parse_error, message, ms);
    if (outcome == "runtime_error") return RenderStatus::failure(RenderOutcome::runtime_error, message, ms);
    throw RendererUnavailable("render service sent unknown outcome '" + outcome + "'");
  }

  struct Health {
    std::string status;
    int workers = 0;
    std::string version;
  };

  /// GET /health. Throws RendererUnavailable when unreachable.
  Health health() const {
    httplib::Client client(url_.origin);
    detail::set_timeouts(client, 1000);
    auto res = client.Get(url_.path + "/health");
    if (!res || res->status != 200) throw RendererUnavailable("render service health check failed");
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw RendererUnavailable("render service health body is not JSON");
    return {body.value("status", std::string{}), body.value("workers", 0), body.value("version", std::string{})};
  }

 private:
  RendererConfig cfg_;
  HttpEndpoint url_;
};

/// Chat-completion judge transport. Posts the request payload to the
/// configured endpoint and returns choices[0].message.content, or the raw
/// body when the reply has a different shape.
class HttpJudgeClient : public JudgeClient {
 public:
  explicit HttpJudgeClient(JudgeConfig cfg) : cfg_(std::move(cfg)), url_(split_url(cfg_.endpoint)) { cfg_.validate(); }

  std::string complete(const JudgeRequest& request) override {
    httplib::Client client(url_.origin);
    detail::set_timeouts(client, cfg_.request_timeout_ms);
    auto res = client.Post(url_.path.empty() ? "/" : url_.path, request.payload, "application/json");
    if (!res) throw JudgeUnavailable("judge unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw JudgeUnavailable("judge returned HTTP " + std::to_string(res->status));
    }
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (!body.is_discarded() && body.is_object() && body.contains("choices") && body["choices"].is_array() &&
        !body["choices"].empty()) {
      const auto& choice = body["choices"][0];
      if (choice.contains("message") && choice["message"].contains("content") &&
          choice["message"]["content"].is_string()) {
        return choice["message"]["content"].get<std::string>();
      }
    }
    return res->body;
  }

 private:
  JudgeConfig cfg_;
  HttpEndpoint url_;
};

}  // namespace chartrl
