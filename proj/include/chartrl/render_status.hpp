#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chartrl {

enum class RenderOutcome { ok, parse_error, runtime_error, timeout };

inline std::string_view to_string(RenderOutcome o) {
  switch (o) {
    case RenderOutcome::ok: return "ok";
    case RenderOutcome::parse_error: return "parse_error";
    case RenderOutcome::runtime_error: return "runtime_error";
    case RenderOutcome::timeout: return "timeout";
  }
  return "runtime_error";
}

using ImageBytes = std::vector<std::uint8_t>;

/// Result of executing one script. `image` holds PNG bytes iff outcome is ok.
struct RenderStatus {
  RenderOutcome outcome = RenderOutcome::runtime_error;
  std::optional<ImageBytes> image;
  std::int64_t duration_ms = 0;
  std::string error_message;

  static RenderStatus success(ImageBytes png, std::int64_t ms = 0) {
    return RenderStatus{RenderOutcome::ok, std::move(png), ms, {}};
  }
  static RenderStatus failure(RenderOutcome o, std::string message = {}, std::int64_t ms = 0) {
    return RenderStatus{o, std::nullopt, ms, std::move(message)};
  }
  bool ok() const { return outcome == RenderOutcome::ok; }
};

}  // namespace chartrl
