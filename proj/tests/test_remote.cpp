#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "ctirb/remote.hpp"

using namespace ctirb;

namespace {

constexpr const char* kTestKey = "sk-test-not-a-real-key";

// Local chat-completion stand-in. The reply and status are switchable.
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::atomic<int> fail_first{0};
  std::atomic<int> status{200};
  std::string reply = "routine upgrade for nessus";
  std::string last_auth;
  nlohmann::json last_body;

  MockServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests;
      last_auth = req.get_header_value("Authorization");
      last_body = nlohmann::json::parse(req.body);
      if (n <= fail_first) {
        res.status = 503;
        return;
      }
      res.status = status;
      nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    setenv(kApiUrlEnv, ("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions").c_str(), 1);
    setenv(kApiKeyEnv, kTestKey, 1);
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }
};

TextRecord record() {
  TextRecord r;
  r.id = "m1";
  r.clean_text = r.raw_text = "exploit released for nessus";
  r.label = 1;
  return r;
}

AttentionProfile profile(const TextRecord& r) {
  AttentionProfile p;
  p.id = r.id;
  p.tokens = r.tokens();
  p.alpha.assign(p.tokens.size(), 0.25);
  p.top_k = {3};
  return p;
}

RemoteConfig fast() {
  RemoteConfig c;
  c.model = "mock-model";
  c.timeout = std::chrono::milliseconds(2000);
  c.initial_backoff = std::chrono::milliseconds(1);
  return c;
}

}  // namespace

TEST_CASE("remote backend produces a FaN with lineage through a mock endpoint") {
  MockServer mock;
  const RemoteChatBackend backend(fast());
  const auto r = record();
  const auto p = profile(r);
  const auto spec = make_prompt_spec(PromptTemplate{}, p);
  const auto fan = generate_fan(r, p, spec, backend, 1);
  CHECK(fan.text == "routine upgrade for nessus");
  CHECK(fan.emitted());
  CHECK(fan.backend == "remote:mock-model");
  CHECK(fan.source_id == "m1");
  const auto lineage = fan.lineage();
  CHECK(lineage["key_tokens"] == nlohmann::json::array({"nessus"}));
  CHECK(lineage["prompt_variant"] == 0);

  CHECK(mock.last_auth == std::string("Bearer ") + kTestKey);
  CHECK(mock.last_body["model"] == "mock-model");
  CHECK(mock.last_body["temperature"] == 1.0);
  CHECK(mock.last_body["messages"][0]["content"] == build_fan_prompt(r, p, spec));
}

TEST_CASE("remote output without the key token is flagged") {
  MockServer mock;
  mock.reply = "routine upgrade notes";
  const RemoteChatBackend backend(fast());
  const auto r = record();
  const auto p = profile(r);
  const auto fan = generate_fan(r, p, make_prompt_spec(PromptTemplate{}, p), backend, 1);
  CHECK_FALSE(fan.emitted());
  CHECK(fan.flags.front() == FanFlag::missing_key_token);
}

TEST_CASE("retryable failures back off and succeed") {
  MockServer mock;
  mock.fail_first = 2;
  const RemoteChatBackend backend(fast());
  CHECK(backend.complete("hi") == mock.reply);
  CHECK(mock.requests == 3);
}

TEST_CASE("client errors are not retried and never echo the credential") {
  MockServer mock;
  mock.status = 401;
  const RemoteChatBackend backend(fast());
  try {
    backend.complete("hi");
    FAIL("expected failure");
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find(kTestKey) == std::string::npos);
    CHECK(std::string(e.what()).find("401") != std::string::npos);
  }
  CHECK(mock.requests == 1);
}

TEST_CASE("missing environment is a validation error") {
  unsetenv(kApiKeyEnv);
  setenv(kApiUrlEnv, "http://127.0.0.1:9/", 1);
  CHECK_THROWS_AS(RemoteChatBackend{}, ValidationError);
  setenv(kApiKeyEnv, kTestKey, 1);
  setenv(kApiUrlEnv, "ftp://example", 1);
  CHECK_THROWS_AS(RemoteChatBackend{}, ValidationError);
}
