#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "hila/core_model.hpp"

namespace hila {

/// OpenAI-compatible chat-completion endpoint settings.
struct RemoteClientConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model;
  double top_p = 0.95;
  double temperature = 0.7;
  int max_tokens = 1024;
  std::string api_key_env = "HILA_API_KEY";
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{500};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds timeout{60'000};
  int max_in_flight = 4;

  /// Defaults for proxy experts: same endpoint, temperature 0.3.
  static RemoteClientConfig expert_defaults();
  /// Applies HILA_API_BASE when set.
  RemoteClientConfig with_env_overrides() const;
};

class ChatError : public std::runtime_error {
 public:
  enum class Kind { Network, Timeout, Http, Auth, Malformed };
  ChatError(Kind kind, int status, const std::string& message)
      : std::runtime_error(message), kind_(kind), status_(status) {}
  Kind kind() const { return kind_; }
  /// HTTP status, 0 when no response arrived.
  int status() const { return status_; }
  bool transient() const;

 private:
  Kind kind_;
  int status_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatResult {
  std::string content;
  TokenCounts usage;
  int retries = 0;
};

/// Shareable across threads; concurrent requests are capped at max_in_flight.
class ChatClient {
 public:
  explicit ChatClient(RemoteClientConfig config);
  ~ChatClient();
  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  /// One chat-completion request, retried with exponential backoff on
  /// transient failures (network errors, timeouts, 429, 5xx).
  ChatResult complete(const std::vector<ChatMessage>& messages);
  ChatResult complete_prompt(const std::string& prompt) { return complete({{"user", prompt}}); }

  const RemoteClientConfig& config() const { return config_; }
  /// Retries performed over the client's lifetime.
  long total_retries() const { return total_retries_.load(); }

 private:
  ChatResult attempt(const std::string& body);

  RemoteClientConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<long> total_retries_{0};
};

/// Request body as sent on the wire (exposed for tests).
std::string build_chat_request_body(const RemoteClientConfig& config, const std::vector<ChatMessage>& messages);

}  // namespace hila
