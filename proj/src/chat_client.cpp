#include "hila/chat_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace hila {

using nlohmann::json;

RemoteClientConfig RemoteClientConfig::expert_defaults() {
  RemoteClientConfig c;
  c.temperature = 0.3;
  return c;
}

RemoteClientConfig RemoteClientConfig::with_env_overrides() const {
  RemoteClientConfig c = *this;
  if (const char* base = std::getenv("HILA_API_BASE"); base && *base) c.base_url = base;
  return c;
}

bool ChatError::transient() const {
  switch (kind_) {
    case Kind::Network:
    case Kind::Timeout: return true;
    case Kind::Http: return status_ == 429 || status_ >= 500;
    case Kind::Auth:
    case Kind::Malformed: return false;
  }
  return false;
}

std::string build_chat_request_body(const RemoteClientConfig& config, const std::vector<ChatMessage>& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", config.model},
               {"messages", msgs},
               {"temperature", config.temperature},
               {"top_p", config.top_p},
               {"max_tokens", config.max_tokens}};
  return body.dump();
}

ChatClient::ChatClient(RemoteClientConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, std::min(config_.max_in_flight, 1024))) {
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ChatClient::~ChatClient() = default;

ChatResult ChatClient::attempt(const std::string& body) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = cli.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
      throw ChatError(ChatError::Kind::Timeout, 0, "chat request timed out: " + httplib::to_string(err));
    }
    throw ChatError(ChatError::Kind::Network, 0, "chat request failed: " + httplib::to_string(err));
  }
  if (res->status == 401 || res->status == 403) {
    throw ChatError(ChatError::Kind::Auth, res->status, "authentication rejected (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status != 200) {
    throw ChatError(ChatError::Kind::Http, res->status,
                    "HTTP " + std::to_string(res->status) + " from chat endpoint: " + res->body.substr(0, 200));
  }

  ChatResult out;
  try {
    const json j = json::parse(res->body);
    out.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      out.usage.input = u->value("prompt_tokens", std::int64_t{0});
      out.usage.output = u->value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw ChatError(ChatError::Kind::Malformed, res->status, std::string("malformed chat response: ") + e.what());
  }
  return out;
}

ChatResult ChatClient::complete(const std::vector<ChatMessage>& messages) {
  const std::string body = build_chat_request_body(config_, messages);
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  auto delay = config_.backoff_initial;
  for (int retries = 0;; ++retries) {
    try {
      ChatResult r = attempt(body);
      r.retries = retries;
      return r;
    } catch (const ChatError& e) {
      if (!e.transient() || retries >= config_.max_retries) throw;
    }
    ++total_retries_;
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long>(static_cast<double>(delay.count()) * config_.backoff_multiplier));
  }
}

}  // namespace hila
