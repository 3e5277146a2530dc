#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ctirb/remote.hpp"

#include <cstdlib>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace ctirb {

void RemoteConfig::validate() const {
  if (model.empty()) throw ValidationError("remote model name is empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw ValidationError("temperature must be in [0, 2]");
  if (timeout.count() <= 0) throw ValidationError("timeout must be positive");
  if (max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  if (initial_backoff.count() < 0) throw ValidationError("backoff must be >= 0");
}

namespace {

std::string require_env(const char* name) {
  const char* value = std::getenv(name);
  if (value == nullptr || *value == '\0') throw ValidationError(std::string(name) + " is not set");
  return value;
}

}  // namespace

RemoteChatBackend::RemoteChatBackend(RemoteConfig config) : config_(std::move(config)) {
  config_.validate();
  url_ = require_env(kApiUrlEnv);
  key_ = require_env(kApiKeyEnv);
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url_, m, pattern)) throw ValidationError(std::string(kApiUrlEnv) + " is not an http(s) URL");
  origin_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

RemoteChatBackend::~RemoteChatBackend() {
  // best effort: do not leave the credential in freed memory
  std::fill(key_.begin(), key_.end(), '\0');
}

std::string RemoteChatBackend::complete_once(const std::string& body) const {
  httplib::Client client(origin_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  const httplib::Headers headers{{"Authorization", "Bearer " + key_}};
  const auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw RetryableError("chat request to " + url_ + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw RetryableError("chat endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw RuntimeFailure("chat endpoint returned HTTP " + std::to_string(res->status));
  try {
    const auto doc = nlohmann::json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw RuntimeFailure("chat endpoint returned a malformed completion");
  }
}

std::string RemoteChatBackend::complete(const std::string& user_message) const {
  const nlohmann::json body = {{"model", config_.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", user_message}}})},
                               {"temperature", config_.temperature}};
  const std::string payload = body.dump();
  auto backoff = config_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return complete_once(payload);
    } catch (const RetryableError&) {
      if (attempt >= config_.max_attempts) throw;
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

std::string RemoteChatBackend::rewrite(const FanRequest& request) const {
  std::string text = complete(request.prompt);
  // models sometimes wrap the answer in quotes or trailing newlines
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') text = text.substr(1, text.size() - 2);
  return text;
}

std::vector<std::string> RemoteChatBackend::paraphrase(const TextRecord& record, std::size_t n, std::uint64_t) const {
  const std::string prompt = "Write " + std::to_string(n) +
                             " different paraphrases of the message below, one per line, without numbering. "
                             "Keep every product name, organisation, version and vulnerability identifier as is.\n"
                             "Message: \"" + record.clean_text + "\"";
  std::istringstream lines(complete(prompt));
  std::vector<std::string> out;
  for (std::string line; std::getline(lines, line);) {
    const auto first = line.find_first_not_of(" \t-*");
    if (first == std::string::npos) continue;
    line = line.substr(first);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::unique_ptr<GenerationBackend> make_backend(std::string_view name, const RemoteConfig& remote) {
  if (name == "template" || name == "fallback") return std::make_unique<TemplateBackend>();
  if (name == "remote") return std::make_unique<RemoteChatBackend>(remote);
  throw ValidationError("unknown backend '" + std::string(name) + "' (expected fallback or remote)");
}

}  // namespace ctirb
