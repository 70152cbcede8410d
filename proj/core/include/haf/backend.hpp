#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "haf/model.hpp"

namespace haf {

struct GenerationParams {
  double temperature = 0.6;
  double top_p = 0.8;
  int max_new_tokens = 256;

  /// Throws Error(ConfigError) when out of range.
  void validate() const;
  bool operator==(const GenerationParams&) const = default;
};

/// Stable SHA-256 hex digest of the exact prompt bytes.
std::string fingerprint(std::string_view prompt);

/// Obtains one generation with per-token log-probabilities. Every call is an
/// independent single-turn request; implementations must be safe to call
/// concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationTrace complete(const std::string& prompt, const GenerationParams& params) = 0;
  virtual std::string model_id() const = 0;
  virtual std::string endpoint() const = 0;
};

struct ScriptEntry {
  std::string prompt;              // exact match, or
  std::string prompt_fingerprint;  // fingerprint match
  std::vector<TokenRecord> response_tokens;
};

/// Replays canned responses. Lookup is by exact prompt first, then by
/// fingerprint. Bit-deterministic; counts calls for resume tests.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries, std::string model = "scripted");

  /// Loads a JSON array of entries:
  ///   {"prompt": "...", "tokens": [["The", -0.1], [" text", -0.2]]}
  /// `"fingerprint"` may replace `"prompt"`.
  static ScriptedBackend from_file(const std::string& path, std::string model = "scripted");
  static ScriptedBackend from_json(const nlohmann::json& doc, std::string model = "scripted");

  GenerationTrace complete(const std::string& prompt, const GenerationParams& params) override;
  std::string model_id() const override { return model_; }
  std::string endpoint() const override { return "scripted://"; }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::vector<ScriptEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> by_prompt_;
  std::map<std::string, std::size_t, std::less<>> by_fingerprint_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpBackendOptions {
  std::string base_url;  // e.g. http://localhost:8000
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  double logprob_scale = 1.0;  // multiply reported logprobs into natural log
  std::size_t max_in_flight = 8;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{120};
};

/// Chat-completions client for logprob-capable OpenAI-compatible servers.
/// Retries transport failures with exponential backoff; never retries a
/// response that lacks logprobs.
class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);
  ~HttpChatBackend() override;

  GenerationTrace complete(const std::string& prompt, const GenerationParams& params) override;
  std::string model_id() const override { return options_.model; }
  std::string endpoint() const override { return options_.base_url; }

 private:
  HttpBackendOptions options_;
  std::counting_semaphore<> in_flight_;
};

/// Builds the request body sent to /v1/chat/completions.
nlohmann::json chat_request_body(const std::string& model, const std::string& prompt,
                                 const GenerationParams& params);

/// Converts a chat-completions response body into a trace. Throws
/// MissingLogprobs, TokenTextMismatch or MalformedResponse.
GenerationTrace trace_from_chat_response(const nlohmann::json& body, double logprob_scale,
                                         const std::string& prompt);

/// Split "http://host:port/prefix" into the scheme-host-port part and the path prefix.
struct UrlParts {
  std::string origin;
  std::string path_prefix;
};
UrlParts split_url(const std::string& url);

}  // namespace haf
