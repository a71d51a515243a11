#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <json.hpp>

#include "hila/core_model.hpp"
#include "hila/pending_queue.hpp"

namespace httplib {
class Server;
}

namespace hila {

/// Latest transcript per episode id, published by running episodes and read
/// by the console. Falls back to <episodes_dir>/<id>.json when given.
class EpisodeRegistry {
 public:
  explicit EpisodeRegistry(std::optional<std::filesystem::path> episodes_dir = std::nullopt)
      : dir_(std::move(episodes_dir)) {}

  void publish(const std::string& id, nlohmann::json transcript);
  std::optional<nlohmann::json> get(const std::string& id) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> live_;
  std::optional<std::filesystem::path> dir_;
};

struct ServiceContext {
  PendingQueue& queue;
  GuidanceStore& guidance;
  EpisodeRegistry& episodes;
  /// When set, guidance for ids outside this set is rejected with 404.
  std::optional<std::set<std::string>> known_tasks;
};

/// HTTP bridge between waiting episodes and human experts:
///   GET  /api/pending          pending requests, oldest first
///   POST /api/respond          {id, text, level} -> 200 | 400 | 404 | 409
///   POST /api/guidance         {task_id, level, text} -> 200 | 400 | 404
///   GET  /api/episodes/<id>    transcript JSON or 404
///   GET  /api/health           {"status":"ok"}
class Service {
 public:
  explicit Service(ServiceContext context);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port; throws std::runtime_error when binding fails.
  int start(const std::string& host, int port);
  /// Stops accepting requests, waits for the server thread and flushes the queue.
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  ServiceContext ctx_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace hila
