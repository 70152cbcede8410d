#include "haf/backend.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>
#include <nlohmann/json.hpp>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

void GenerationParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::ConfigError, "temperature must be >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::ConfigError, "top_p must lie in (0,1]");
  if (max_new_tokens <= 0) throw Error(ErrorKind::ConfigError, "max_new_tokens must be positive");
}

std::string fingerprint(std::string_view prompt) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(prompt.data(), prompt.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0F]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted backend

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries, std::string model)
    : entries_(std::move(entries)), model_(std::move(model)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    for (const auto& t : e.response_tokens) {
      if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
        throw Error(ErrorKind::ConfigError, "script entry " + std::to_string(i) + " has logprob > 0");
      }
    }
    if (e.response_tokens.empty()) {
      throw Error(ErrorKind::ConfigError, "script entry " + std::to_string(i) + " has no tokens");
    }
    if (!e.prompt.empty()) by_prompt_.emplace(e.prompt, i);
    if (!e.prompt_fingerprint.empty()) by_fingerprint_.emplace(e.prompt_fingerprint, i);
    if (e.prompt.empty() && e.prompt_fingerprint.empty()) {
      throw Error(ErrorKind::ConfigError, "script entry " + std::to_string(i) + " has no matcher");
    }
  }
}

ScriptedBackend ScriptedBackend::from_json(const json& doc, std::string model) {
  if (!doc.is_array()) throw Error(ErrorKind::ConfigError, "script must be a JSON array");
  std::vector<ScriptEntry> entries;
  entries.reserve(doc.size());
  for (const auto& item : doc) {
    ScriptEntry e;
    e.prompt = item.value("prompt", std::string{});
    e.prompt_fingerprint = item.value("fingerprint", std::string{});
    for (const auto& tok : item.at("tokens")) {
      TokenRecord t;
      if (tok.is_array()) {
        t.text = tok.at(0).get<std::string>();
        t.logprob = tok.at(1).get<double>();
      } else {
        t.text = tok.at("token").get<std::string>();
        t.logprob = tok.at("logprob").get<double>();
      }
      t.special = t.text.empty();
      e.response_tokens.push_back(std::move(t));
    }
    entries.push_back(std::move(e));
  }
  return ScriptedBackend(std::move(entries), std::move(model));
}

ScriptedBackend ScriptedBackend::from_file(const std::string& path, std::string model) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open script file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "script file " + path + ": " + e.what());
  }
  return from_json(doc, std::move(model));
}

GenerationTrace ScriptedBackend::complete(const std::string& prompt, const GenerationParams&) {
  ++calls_;
  const ScriptEntry* entry = nullptr;
  if (auto it = by_prompt_.find(prompt); it != by_prompt_.end()) {
    entry = &entries_[it->second];
  } else {
    const auto fp = fingerprint(prompt);
    if (auto jt = by_fingerprint_.find(fp); jt != by_fingerprint_.end()) entry = &entries_[jt->second];
  }
  if (entry == nullptr) {
    throw Error(ErrorKind::ScriptMiss, "no scripted response for prompt " + fingerprint(prompt));
  }
  GenerationTrace trace;
  trace.tokens = entry->response_tokens;
  for (const auto& t : trace.tokens) trace.full_text += t.text;
  trace.prompt_fingerprint = fingerprint(prompt);
  return trace;
}

// ---------------------------------------------------------------------------
// HTTP chat backend

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.origin = url;
  } else {
    parts.origin = url.substr(0, path_start);
    parts.path_prefix = url.substr(path_start);
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') parts.path_prefix.pop_back();
  }
  return parts;
}

json chat_request_body(const std::string& model, const std::string& prompt,
                       const GenerationParams& params) {
  return json{
      {"model", model},
      {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
      {"temperature", params.temperature},
      {"top_p", params.top_p},
      {"max_tokens", params.max_new_tokens},
      {"logprobs", true},
  };
}

GenerationTrace trace_from_chat_response(const json& body, double logprob_scale,
                                         const std::string& prompt) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
      body["choices"].empty()) {
    throw Error(ErrorKind::MalformedResponse, "response has no choices");
  }
  const auto& choice = body["choices"][0];
  const auto* message = choice.contains("message") ? &choice["message"] : nullptr;
  if (message == nullptr || !message->contains("content") || !(*message)["content"].is_string()) {
    throw Error(ErrorKind::MalformedResponse, "choices[0].message.content missing");
  }
  const auto content = (*message)["content"].get<std::string>();

  const json* lp = nullptr;
  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
    lp = &choice["logprobs"]["content"];
  }
  if (lp == nullptr || (lp->empty() && !content.empty())) {
    throw Error(ErrorKind::MissingLogprobs,
                "endpoint answered without per-token logprobs; enable logprobs on the server");
  }

  GenerationTrace trace;
  trace.prompt_fingerprint = fingerprint(prompt);
  for (const auto& item : *lp) {
    TokenRecord t;
    if (item.contains("bytes") && item["bytes"].is_array()) {
      for (const auto& b : item["bytes"]) t.text.push_back(static_cast<char>(b.get<int>()));
    } else {
      t.text = item.at("token").get<std::string>();
    }
    if (!item.contains("logprob") || !item["logprob"].is_number()) {
      throw Error(ErrorKind::MissingLogprobs, "token without logprob");
    }
    double v = item["logprob"].get<double>() * logprob_scale;
    if (!std::isfinite(v)) throw Error(ErrorKind::MalformedResponse, "non-finite logprob");
    if (v > 0.0) {
      if (v > 1e-6) throw Error(ErrorKind::MalformedResponse, "positive logprob " + std::to_string(v));
      v = 0.0;
    }
    t.logprob = v;
    t.special = t.text.empty();
    trace.full_text += t.text;
    trace.tokens.push_back(std::move(t));
  }
  if (trace.tokens.empty()) throw Error(ErrorKind::MalformedResponse, "empty generation");
  if (trace.full_text != content) {
    throw Error(ErrorKind::TokenTextMismatch,
                "concatenated token texts differ from message content (" +
                    std::to_string(trace.full_text.size()) + " vs " + std::to_string(content.size()) +
                    " bytes)");
  }
  return trace;
}

HttpChatBackend::HttpChatBackend(HttpBackendOptions options)
    : options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
  if (options_.base_url.empty()) throw Error(ErrorKind::ConfigError, "backend base_url is empty");
  if (options_.model.empty()) throw Error(ErrorKind::ConfigError, "backend model is empty");
  if (!(options_.logprob_scale > 0.0)) throw Error(ErrorKind::ConfigError, "logprob_scale must be > 0");
}

HttpChatBackend::~HttpChatBackend() = default;

GenerationTrace HttpChatBackend::complete(const std::string& prompt, const GenerationParams& params) {
  params.validate();
  const auto url = split_url(options_.base_url);
  const auto path = url.path_prefix + "/v1/chat/completions";
  const auto body = chat_request_body(options_.model, prompt, params).dump();

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  httplib::Client client(url.origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  if (!options_.api_key.empty()) client.set_bearer_token_auth(options_.api_key);

  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorKind::EndpointUnreachable,
                  "HTTP " + std::to_string(res->status) + " from " + options_.base_url + path);
    }
    json doc;
    try {
      doc = json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedResponse, e.what());
    }
    return trace_from_chat_response(doc, options_.logprob_scale, prompt);
  }
  throw Error(ErrorKind::EndpointUnreachable, options_.base_url + ": " + last_error);
}

}  // namespace haf
