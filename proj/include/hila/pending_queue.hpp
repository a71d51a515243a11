#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hila/demonstration.hpp"

namespace hila {

enum class RequestStatus { Pending, Answered, Expired };
std::string_view to_string(RequestStatus status);
RequestStatus parse_request_status(std::string_view text);

struct PendingRequest {
  std::string id;
  std::string task_id;
  int round = 0;
  std::string task_prompt;
  std::string state_summary;
  ExpertLevel level = ExpertLevel::Reasoning;
  std::int64_t created_at_ms = 0;
  RequestStatus status = RequestStatus::Pending;
  std::optional<std::string> response;
  std::optional<ExpertLevel> response_level;
  bool consumed = false;
};

enum class RespondStatus { Ok, NotFound, Conflict };

/// The DEFER queue shared between episode executors and human responders.
/// Every mutation is written through to `persist_path` when one is given, so
/// the queue survives a restart.
class PendingQueue {
 public:
  explicit PendingQueue(std::optional<std::filesystem::path> persist_path = std::nullopt);

  /// Opens a request for (task, round), or returns the id of the request
  /// already open for that pair so an interrupted episode can resume.
  std::string enqueue(const std::string& task_id, int round, const std::string& task_prompt,
                      const std::string& state_summary, ExpertLevel level);

  std::vector<PendingRequest> pending() const;
  std::optional<PendingRequest> get(const std::string& id) const;

  /// pending -> answered. NotFound for unknown ids, Conflict when the request
  /// was already answered or has expired.
  RespondStatus respond(const std::string& id, const std::string& text, ExpertLevel level);

  /// pending -> expired. False when the request is not pending.
  bool expire(const std::string& id);
  std::size_t expire_older_than(std::chrono::milliseconds age);

  /// Blocks until the request is answered (or the timeout passes) and claims
  /// the response. A response is handed out exactly once; later calls and
  /// expired requests yield nullopt.
  std::optional<PendingRequest> await_response(const std::string& id, std::chrono::milliseconds timeout);

  void flush() const;

 private:
  void persist_locked() const;
  void load();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, PendingRequest> requests_;
  std::uint64_t next_id_ = 1;
  std::optional<std::filesystem::path> persist_path_;
};

struct Guidance {
  ExpertLevel level = ExpertLevel::Idea;
  std::string text;
};

/// Proactive guidance keyed by task id; last write wins.
class GuidanceStore {
 public:
  /// Returns true when an earlier entry was replaced.
  bool set(const std::string& task_id, Guidance guidance);
  std::optional<Guidance> get(const std::string& task_id) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Guidance> entries_;
};

std::int64_t unix_millis();

}  // namespace hila
