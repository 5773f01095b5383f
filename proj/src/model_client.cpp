#include "cog/model_client.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <random>
#include <regex>
#include <thread>

namespace cog {

namespace {

using nlohmann::json;

constexpr const char* kNumberPattern =
    R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";

bool find_json_xy(const std::string& raw, double& x, double& y) {
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '{') continue;
    int depth = 0;
    size_t end = std::string::npos;
    for (size_t j = i; j < raw.size(); ++j) {
      if (raw[j] == '{') ++depth;
      else if (raw[j] == '}' && --depth == 0) { end = j; break; }
    }
    if (end == std::string::npos) continue;
    json obj = json::parse(raw.substr(i, end - i + 1), nullptr, false);
    if (obj.is_object() && obj.contains("x") && obj.contains("y") &&
        obj["x"].is_number() && obj["y"].is_number()) {
      x = obj["x"].get<double>();
      y = obj["y"].get<double>();
      return true;
    }
  }
  return false;
}

bool find_delimited_pair(const std::string& raw, double& x, double& y) {
  static const std::regex re(std::string(R"([(\[]\s*()") + kNumberPattern +
                             R"()\s*,\s*()" + kNumberPattern + R"()\s*[)\]])");
  std::smatch m;
  if (!std::regex_search(raw, m, re)) return false;
  x = std::strtod(m[1].str().c_str(), nullptr);
  y = std::strtod(m[2].str().c_str(), nullptr);
  return true;
}

bool find_bare_pair(const std::string& raw, double& x, double& y) {
  static const std::regex re(std::string("(") + kNumberPattern +
                             R"()\s*,\s*()" + kNumberPattern + ")");
  std::smatch m;
  if (!std::regex_search(raw, m, re)) return false;
  x = std::strtod(m[1].str().c_str(), nullptr);
  y = std::strtod(m[2].str().c_str(), nullptr);
  return true;
}

std::string base64_encode(std::span<const uint8_t> data) {
  static const char* table =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back(table[v & 63]);
  }
  if (i + 1 == data.size()) {
    const uint32_t v = data[i] << 16;
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    const uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

// Blocking admission up to a fixed number of in-flight requests.
class RequestLimiter {
 public:
  explicit RequestLimiter(int cap) : available_(cap > 0 ? cap : 1) {}

  class Permit {
   public:
    explicit Permit(RequestLimiter& limiter) : limiter_(limiter) {
      std::unique_lock lock(limiter_.mutex_);
      limiter_.cv_.wait(lock, [&] { return limiter_.available_ > 0; });
      --limiter_.available_;
    }
    ~Permit() {
      {
        std::lock_guard lock(limiter_.mutex_);
        ++limiter_.available_;
      }
      limiter_.cv_.notify_one();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    RequestLimiter& limiter_;
  };

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

class ScriptedBackend final : public GroundingBackend {
 public:
  ScriptedBackend(BackendDescriptor descriptor, Script script,
                  std::optional<std::string> default_reply)
      : descriptor_(std::move(descriptor)), script_(std::move(script)),
        default_reply_(std::move(default_reply)) {}

  RawReply request_grounding(const GroundingQuery& query) override {
    const auto it = script_.find({query.meta.instance_id, query.meta.step_index});
    std::string text;
    if (it != script_.end()) {
      text = it->second;
    } else if (default_reply_) {
      text = *default_reply_;
    } else {
      throw ScriptedMissError("no scripted reply for (" +
                              query.meta.instance_id + ", step " +
                              std::to_string(query.meta.step_index) + ")");
    }
    RawReply reply;
    reply.text = std::move(text);
    reply.latency_ms = 0;
    reply.attempt_count = 1;
    return reply;
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }

 private:
  BackendDescriptor descriptor_;
  Script script_;
  std::optional<std::string> default_reply_;
};

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint_url missing scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string extract_reply_text(const json& response) {
  const auto& content = response.at("choices").at(0).at("message").at("content");
  if (content.is_string()) {
    return content.get<std::string>();
  }
  // Some endpoints return content as a list of typed parts.
  std::string out;
  for (const auto& part : content) {
    if (part.is_object() && part.value("type", "") == "text") {
      out += part.value("text", "");
    }
  }
  return out;
}

class RemoteBackend final : public GroundingBackend {
 public:
  explicit RemoteBackend(BackendDescriptor descriptor)
      : descriptor_(std::move(descriptor)),
        limiter_(descriptor_.max_concurrent),
        rng_(std::random_device{}()) {
    if (descriptor_.endpoint_url.empty() || descriptor_.model_name.empty()) {
      throw std::invalid_argument(
          "remote backend requires endpoint_url and model_name");
    }
  }

  RawReply request_grounding(const GroundingQuery& query) override {
    if (query.prompt.empty() || query.image == nullptr || query.image->empty()) {
      throw std::invalid_argument("grounding query needs a prompt and an image");
    }

    ImageBuffer sent = *query.image;
    double scale_back_x = 1.0, scale_back_y = 1.0;
    const int edge = descriptor_.max_image_edge;
    const int long_edge = std::max(sent.width(), sent.height());
    if (edge > 0 && long_edge > edge) {
      int new_w, new_h;
      if (sent.width() >= sent.height()) {
        new_w = edge;
        new_h = static_cast<int>(static_cast<int64_t>(sent.height()) * edge /
                                 sent.width());
      } else {
        new_h = edge;
        new_w = static_cast<int>(static_cast<int64_t>(sent.width()) * edge /
                                 sent.height());
      }
      new_w = std::max(new_w, 1);
      new_h = std::max(new_h, 1);
      scale_back_x = static_cast<double>(sent.width()) / new_w;
      scale_back_y = static_cast<double>(sent.height()) / new_h;
      sent = resize_image(sent, new_w, new_h);
    }

    const std::string body = build_body(sent, query.prompt);
    const ParsedUrl url = split_url(descriptor_.endpoint_url);

    RequestLimiter::Permit permit(limiter_);
    const auto start = std::chrono::steady_clock::now();
    const int max_attempts = descriptor_.max_retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      httplib::Client client(url.base);
      client.set_connection_timeout(std::chrono::duration<double>(
          descriptor_.timeout_seconds));
      client.set_read_timeout(std::chrono::duration<double>(
          descriptor_.timeout_seconds));
      client.set_write_timeout(std::chrono::duration<double>(
          descriptor_.timeout_seconds));
      httplib::Headers headers;
      if (!descriptor_.auth_token_env.empty()) {
        if (const char* token = std::getenv(descriptor_.auth_token_env.c_str())) {
          headers.emplace("Authorization", std::string("Bearer ") + token);
        }
      }

      auto res = client.Post(url.path, headers, body, "application/json");
      const auto elapsed_ms = std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - start).count();

      if (res) {
        if (res->status >= 200 && res->status < 300) {
          json parsed = json::parse(res->body, nullptr, false);
          if (parsed.is_discarded()) {
            throw ProtocolError("endpoint returned non-JSON body", res->status,
                                res->body.substr(0, 200));
          }
          try {
            RawReply reply;
            reply.text = extract_reply_text(parsed);
            reply.latency_ms = elapsed_ms;
            reply.attempt_count = attempt;
            reply.scale_back_x = scale_back_x;
            reply.scale_back_y = scale_back_y;
            return reply;
          } catch (const json::exception& e) {
            throw ProtocolError(std::string("unexpected response shape: ") +
                                    e.what(),
                                res->status, res->body.substr(0, 200));
          }
        }
        // Retry server-side failures, surface client errors immediately.
        if (res->status < 500) {
          throw ProtocolError("endpoint returned status " +
                                  std::to_string(res->status),
                              res->status, res->body.substr(0, 200));
        }
        last_error = "status " + std::to_string(res->status);
      } else {
        if (res.error() == httplib::Error::Read &&
            elapsed_ms >= descriptor_.timeout_seconds * 1000 &&
            attempt == max_attempts) {
          throw TimeoutError("request timed out after " +
                             std::to_string(attempt) + " attempts");
        }
        last_error = httplib::to_string(res.error());
      }
      if (attempt < max_attempts) {
        backoff_sleep(attempt);
      } else {
        throw TransportError("request failed after " + std::to_string(attempt) +
                                 " attempts: " + last_error,
                             attempt);
      }
    }
    throw TransportError("unreachable", max_attempts);
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }

 private:
  std::string build_body(const ImageBuffer& image, const std::string& prompt) {
    const std::vector<uint8_t> png = encode_png(image);
    json body = {
        {"model", descriptor_.model_name},
        {"messages",
         json::array({{{"role", "user"},
                       {"content",
                        json::array(
                            {{{"type", "text"}, {"text", prompt}},
                             {{"type", "image_url"},
                              {"image_url",
                               {{"url", "data:image/png;base64," +
                                            base64_encode(png)}}}}})}}})},
    };
    return body.dump();
  }

  // Exponential backoff with full jitter, capped at the request timeout.
  void backoff_sleep(int attempt) {
    const double cap_s = descriptor_.timeout_seconds;
    const double ceiling = std::min(0.5 * std::pow(2.0, attempt - 1), cap_s);
    double jitter;
    {
      std::lock_guard lock(rng_mutex_);
      jitter = std::uniform_real_distribution<double>(0.0, ceiling)(rng_);
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(jitter));
  }

  BackendDescriptor descriptor_;
  RequestLimiter limiter_;
  std::mt19937_64 rng_;
  std::mutex rng_mutex_;
};

}  // namespace

Point parse_point(const std::string& raw, CoordinateConvention convention,
                  int image_width, int image_height) {
  if (image_width <= 0 || image_height <= 0) {
    throw std::invalid_argument("parse_point: image dimensions must be positive");
  }
  double x = 0, y = 0;
  bool found = find_json_xy(raw, x, y) || find_delimited_pair(raw, x, y) ||
               find_bare_pair(raw, x, y);
  if (!found) {
    throw PointParseError("no coordinate pair found in reply", raw);
  }
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw PointParseError("non-finite coordinates in reply", raw);
  }
  switch (convention) {
    case CoordinateConvention::kAbsolutePixels:
      break;
    case CoordinateConvention::kNormalizedUnit:
      x *= image_width;
      y *= image_height;
      break;
    case CoordinateConvention::kNormalized1000:
      x = x * image_width / 1000.0;
      y = y * image_height / 1000.0;
      break;
  }
  if (!std::isfinite(x) || !std::isfinite(y) || std::abs(x) > 1e9 ||
      std::abs(y) > 1e9) {
    throw PointParseError("coordinates out of representable range", raw);
  }
  return {round_half_away(x), round_half_away(y)};
}

std::unique_ptr<GroundingBackend> make_scripted_backend(
    BackendDescriptor descriptor, Script script,
    std::optional<std::string> default_reply) {
  descriptor.kind = BackendKind::kScripted;
  return std::make_unique<ScriptedBackend>(std::move(descriptor),
                                           std::move(script),
                                           std::move(default_reply));
}

std::unique_ptr<GroundingBackend> make_remote_backend(BackendDescriptor descriptor) {
  descriptor.kind = BackendKind::kRemote;
  return std::make_unique<RemoteBackend>(std::move(descriptor));
}

std::unique_ptr<GroundingBackend> make_backend(BackendDescriptor descriptor) {
  if (descriptor.kind == BackendKind::kRemote) {
    return make_remote_backend(std::move(descriptor));
  }
  return make_scripted_backend(std::move(descriptor), {}, std::nullopt);
}

}  // namespace cog
