#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "ctirb/generation.hpp"

namespace ctirb {

inline constexpr const char* kApiUrlEnv = "CTIRB_API_URL";
inline constexpr const char* kApiKeyEnv = "CTIRB_API_KEY";

struct RemoteConfig {
  std::string model = "gpt-4o";
  double temperature = 1.0;
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};

  void validate() const;
};

/// Thrown for failures worth retrying (transport errors, 429, 5xx).
class RetryableError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Chat-completion client. The endpoint is read from CTIRB_API_URL and the
/// bearer credential from CTIRB_API_KEY; neither can be passed in any other
/// way, and the credential never appears in messages or logs.
class RemoteChatBackend final : public GenerationBackend {
 public:
  explicit RemoteChatBackend(RemoteConfig config = {});
  ~RemoteChatBackend() override;

  std::string name() const override { return "remote:" + config_.model; }
  BackendKind kind() const override { return BackendKind::remote_chat; }
  std::string rewrite(const FanRequest& request) const override;
  std::vector<std::string> paraphrase(const TextRecord& record, std::size_t n, std::uint64_t seed) const override;

  /// One user message in, assistant content out, with retries.
  std::string complete(const std::string& user_message) const;
  const std::string& endpoint() const { return url_; }

 private:
  std::string complete_once(const std::string& body) const;

  RemoteConfig config_;
  std::string url_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::string key_;
};

/// "fallback" (alias "template") or "remote".
std::unique_ptr<GenerationBackend> make_backend(std::string_view name, const RemoteConfig& remote = {});

}  // namespace ctirb
