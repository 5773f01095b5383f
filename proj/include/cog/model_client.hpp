#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "cog/core.hpp"
#include "cog/image.hpp"

namespace cog {

enum class BackendKind { kRemote, kScripted };

enum class CoordinateConvention {
  kAbsolutePixels,
  kNormalizedUnit,   // x, y in [0, 1]
  kNormalized1000,   // x, y in [0, 1000]
};

struct BackendDescriptor {
  BackendKind kind = BackendKind::kScripted;
  std::string endpoint_url;   // remote only
  std::string model_name;
  std::string auth_token_env; // env var holding the bearer token, never the token itself
  CoordinateConvention convention = CoordinateConvention::kAbsolutePixels;
  int max_image_edge = 0;     // 0 = never resize
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int max_concurrent = 4;
};

// Identifies the pipeline position a query belongs to; the scripted backend
// keys its replies on this.
struct QueryMeta {
  std::string instance_id;
  int step_index = 1;
};

struct GroundingQuery {
  const ImageBuffer* image = nullptr;
  std::string prompt;
  QueryMeta meta;
};

struct RawReply {
  std::string text;  // verbatim backend reply, logged as-is
  double latency_ms = 0;
  int attempt_count = 1;
  // Back-mapping factors from sent-image space to original space; 1 when the
  // image was not resized. Callers map points back via scale_point.
  double scale_back_x = 1.0;
  double scale_back_y = 1.0;
};

struct TransportError : std::runtime_error {
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempt_count(attempts) {}
  int attempt_count;
};

struct ProtocolError : std::runtime_error {
  ProtocolError(const std::string& what, int status_code, std::string excerpt)
      : std::runtime_error(what), status(status_code),
        body_excerpt(std::move(excerpt)) {}
  int status;
  std::string body_excerpt;
};

struct TimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PointParseError : std::runtime_error {
  PointParseError(const std::string& what, std::string raw_text)
      : std::runtime_error(what), raw(std::move(raw_text)) {}
  std::string raw;
};

struct ScriptedMissError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class GroundingBackend {
 public:
  virtual ~GroundingBackend() = default;
  virtual RawReply request_grounding(const GroundingQuery& query) = 0;
  virtual const BackendDescriptor& descriptor() const = 0;
};

// Extracts the first coordinate pair from raw model text. Priority order:
//   1. a JSON object with numeric "x" and "y"
//   2. a parenthesized or bracketed pair "(x, y)" / "[x, y]"
//   3. two bare numbers separated by a comma
// then rescales per the declared convention and rounds half away from zero.
// Total over arbitrary input: either a Point or a PointParseError.
Point parse_point(const std::string& raw, CoordinateConvention convention,
                  int image_width, int image_height);

using ScriptKey = std::pair<std::string, int>;  // (instance_id, step_index)
using Script = std::map<ScriptKey, std::string>;

// Deterministic backend replaying a fixed script; referentially transparent.
std::unique_ptr<GroundingBackend> make_scripted_backend(
    BackendDescriptor descriptor, Script script,
    std::optional<std::string> default_reply = std::nullopt);

// Vision-chat completion client: prompt text plus the image as a base64 PNG
// data URL, reply text taken from the first choice's message content.
// Retries with exponential backoff and full jitter; admission to the wire is
// limited to descriptor.max_concurrent in-flight requests.
std::unique_ptr<GroundingBackend> make_remote_backend(BackendDescriptor descriptor);

std::unique_ptr<GroundingBackend> make_backend(BackendDescriptor descriptor);

}  // namespace cog
