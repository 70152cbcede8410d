#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "haf/backend.hpp"
#include "haf/error.hpp"

using namespace haf;
using nlohmann::json;

namespace {

json chat_body(const std::vector<std::pair<std::string, double>>& tokens, bool with_logprobs = true) {
  std::string content;
  json lp = json::array();
  for (const auto& [t, p] : tokens) {
    content += t;
    lp.push_back({{"token", t}, {"logprob", p}});
  }
  json choice{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}};
  if (with_logprobs) choice["logprobs"] = {{"content", lp}};
  else choice["logprobs"] = nullptr;
  return {{"choices", json::array({choice})}};
}

/// Loopback chat server answering every request with `body`.
struct LoopbackServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  json last_request;
  std::mutex mu;

  explicit LoopbackServer(json body, int status = 200) {
    server.Post("/v1/chat/completions", [this, body, status](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      {
        std::lock_guard lock(mu);
        last_request = json::parse(req.body);
      }
      res.status = status;
      res.set_content(body.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LoopbackServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("fingerprint is a stable sha-256 hex digest", "[backend]") {
  CHECK(fingerprint("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(fingerprint("prompt A") != fingerprint("prompt B"));
  CHECK(fingerprint("x") == fingerprint("x"));
}

TEST_CASE("generation params are range checked", "[backend]") {
  GenerationParams p;
  CHECK_NOTHROW(p.validate());
  p.temperature = -1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.top_p = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.max_new_tokens = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("scripted backend replays by prompt or fingerprint", "[backend]") {
  const json script = json::array({
      {{"prompt", "hello"}, {"tokens", json::array({json::array({"Hi", -0.1}), json::array({" there", -0.2})})}},
      {{"fingerprint", fingerprint("other")}, {"tokens", json::array({{{"token", "Ok"}, {"logprob", -0.3}}})}},
  });
  auto backend = ScriptedBackend::from_json(script, "m");
  const auto a = backend.complete("hello", {});
  CHECK(a.full_text == "Hi there");
  CHECK(a.tokens.size() == 2);
  CHECK(a.prompt_fingerprint == fingerprint("hello"));
  const auto b = backend.complete("other", {});
  CHECK(b.full_text == "Ok");
  CHECK(b.tokens[0].logprob == -0.3);
  try {
    backend.complete("missing", {});
    FAIL("expected ScriptMiss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ScriptMiss);
  }
  CHECK(backend.calls() == 3);
  CHECK(backend.model_id() == "m");
}

TEST_CASE("chat response parsing", "[backend]") {
  SECTION("tokens concatenate to the content") {
    const auto t = trace_from_chat_response(chat_body({{"The", -0.1}, {" text", -0.5}}), 1.0, "p");
    CHECK(t.full_text == "The text");
    CHECK(t.tokens[1].logprob == -0.5);
    CHECK(t.prompt_fingerprint == fingerprint("p"));
  }
  SECTION("logprob scale converts units") {
    const auto t = trace_from_chat_response(chat_body({{"a", -1.0}}), 0.5, "p");
    CHECK(t.tokens[0].logprob == -0.5);
  }
  SECTION("missing logprobs") {
    try {
      trace_from_chat_response(chat_body({{"a", -1.0}}, false), 1.0, "p");
      FAIL("expected MissingLogprobs");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingLogprobs);
    }
  }
  SECTION("content mismatch") {
    auto body = chat_body({{"a", -1.0}});
    body["choices"][0]["message"]["content"] = "b";
    try {
      trace_from_chat_response(body, 1.0, "p");
      FAIL("expected TokenTextMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TokenTextMismatch);
    }
  }
  SECTION("no choices") {
    try {
      trace_from_chat_response(json{{"choices", json::array()}}, 1.0, "p");
      FAIL("expected MalformedResponse");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedResponse);
    }
  }
}

TEST_CASE("request body asks for logprobs", "[backend]") {
  GenerationParams p;
  const auto body = chat_request_body("m", "hi", p);
  CHECK(body["logprobs"] == true);
  CHECK(body["messages"][0]["content"] == "hi");
  CHECK(body["temperature"] == p.temperature);
  CHECK(body["top_p"] == p.top_p);
}

TEST_CASE("url splitting", "[backend]") {
  auto u = split_url("http://localhost:8000/api");
  CHECK(u.origin == "http://localhost:8000");
  CHECK(u.path_prefix == "/api");
  u = split_url("https://example.org");
  CHECK(u.origin == "https://example.org");
  CHECK(u.path_prefix.empty());
}

TEST_CASE("http backend against a loopback server", "[backend]") {
  SECTION("success") {
    LoopbackServer srv(chat_body({{"Toxic", -0.2}, {".", -0.01}}));
    HttpChatBackend backend({srv.url(), "tiny"});
    const auto t = backend.complete("Is it toxic?", {});
    CHECK(t.full_text == "Toxic.");
    CHECK(srv.hits == 1);
    std::lock_guard lock(srv.mu);
    CHECK(srv.last_request["model"] == "tiny");
    CHECK(srv.last_request["logprobs"] == true);
  }
  SECTION("missing logprobs is not retried") {
    LoopbackServer srv(chat_body({{"x", -0.2}}, false));
    HttpBackendOptions o{srv.url(), "tiny"};
    o.initial_backoff = std::chrono::milliseconds(1);
    HttpChatBackend backend(o);
    try {
      backend.complete("p", {});
      FAIL("expected MissingLogprobs");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingLogprobs);
    }
    CHECK(srv.hits == 1);
  }
  SECTION("http error status") {
    LoopbackServer srv(json{{"error", "boom"}}, 500);
    HttpChatBackend backend({srv.url(), "tiny"});
    try {
      backend.complete("p", {});
      FAIL("expected EndpointUnreachable");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EndpointUnreachable);
    }
  }
}

TEST_CASE("unreachable endpoint exhausts retries", "[backend]") {
  std::string url;
  {
    LoopbackServer closed(json::object());
    url = closed.url();
  }
  HttpBackendOptions o{url, "tiny"};
  o.max_retries = 2;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(2);
  HttpChatBackend backend(o);
  try {
    backend.complete("p", {});
    FAIL("expected EndpointUnreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EndpointUnreachable);
  }
}

TEST_CASE("http backend rejects incomplete options", "[backend]") {
  CHECK_THROWS_AS(HttpChatBackend({"", "m"}), Error);
  CHECK_THROWS_AS(HttpChatBackend({"http://x", ""}), Error);
}
