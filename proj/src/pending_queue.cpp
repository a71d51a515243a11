#include "hila/pending_queue.hpp"

#include <algorithm>
#include <fstream>

#include "hila/json_io.hpp"

namespace hila {

std::string_view to_string(RequestStatus status) {
  switch (status) {
    case RequestStatus::Pending: return "pending";
    case RequestStatus::Answered: return "answered";
    case RequestStatus::Expired: return "expired";
  }
  return "pending";
}

RequestStatus parse_request_status(std::string_view text) {
  for (auto s : {RequestStatus::Pending, RequestStatus::Answered, RequestStatus::Expired}) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown request status: " + std::string(text));
}

std::int64_t unix_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

PendingQueue::PendingQueue(std::optional<std::filesystem::path> persist_path)
    : persist_path_(std::move(persist_path)) {
  if (persist_path_ && std::filesystem::exists(*persist_path_)) load();
}

void PendingQueue::load() {
  std::ifstream in(*persist_path_);
  nlohmann::json j = nlohmann::json::parse(in);
  next_id_ = j.value("next_id", std::uint64_t{1});
  for (const auto& r : j.at("requests")) {
    PendingRequest req = r.get<PendingRequest>();
    requests_.emplace(req.id, std::move(req));
  }
}

void PendingQueue::persist_locked() const {
  if (!persist_path_) return;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [id, r] : requests_) arr.push_back(r);
  nlohmann::json j = {{"next_id", next_id_}, {"requests", arr}};
  if (persist_path_->has_parent_path()) std::filesystem::create_directories(persist_path_->parent_path());
  const auto tmp = std::filesystem::path(persist_path_->string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write pending queue to " + tmp.string());
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, *persist_path_);
}

void PendingQueue::flush() const {
  std::lock_guard lock(mu_);
  persist_locked();
}

std::string PendingQueue::enqueue(const std::string& task_id, int round, const std::string& task_prompt,
                                  const std::string& state_summary, ExpertLevel level) {
  std::lock_guard lock(mu_);
  for (const auto& [id, r] : requests_) {
    if (r.task_id == task_id && r.round == round && !r.consumed && r.status != RequestStatus::Expired) return id;
  }
  PendingRequest req;
  req.id = "req-" + std::to_string(next_id_++);
  req.task_id = task_id;
  req.round = round;
  req.task_prompt = task_prompt;
  req.state_summary = state_summary;
  req.level = level;
  req.created_at_ms = unix_millis();
  const std::string id = req.id;
  requests_.emplace(id, std::move(req));
  persist_locked();
  return id;
}

std::vector<PendingRequest> PendingQueue::pending() const {
  std::lock_guard lock(mu_);
  std::vector<PendingRequest> out;
  for (const auto& [id, r] : requests_) {
    if (r.status == RequestStatus::Pending) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.created_at_ms != b.created_at_ms ? a.created_at_ms < b.created_at_ms : a.id < b.id;
  });
  return out;
}

std::optional<PendingRequest> PendingQueue::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = requests_.find(id);
  if (it == requests_.end()) return std::nullopt;
  return it->second;
}

RespondStatus PendingQueue::respond(const std::string& id, const std::string& text, ExpertLevel level) {
  {
    std::lock_guard lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end()) return RespondStatus::NotFound;
    if (it->second.status != RequestStatus::Pending) return RespondStatus::Conflict;
    it->second.status = RequestStatus::Answered;
    it->second.response = text;
    it->second.response_level = level;
    persist_locked();
  }
  cv_.notify_all();
  return RespondStatus::Ok;
}

bool PendingQueue::expire(const std::string& id) {
  {
    std::lock_guard lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end() || it->second.status != RequestStatus::Pending) return false;
    it->second.status = RequestStatus::Expired;
    persist_locked();
  }
  cv_.notify_all();
  return true;
}

std::size_t PendingQueue::expire_older_than(std::chrono::milliseconds age) {
  std::size_t n = 0;
  {
    std::lock_guard lock(mu_);
    const auto cutoff = unix_millis() - age.count();
    for (auto& [id, r] : requests_) {
      if (r.status == RequestStatus::Pending && r.created_at_ms <= cutoff) {
        r.status = RequestStatus::Expired;
        ++n;
      }
    }
    if (n) persist_locked();
  }
  if (n) cv_.notify_all();
  return n;
}

std::optional<PendingRequest> PendingQueue::await_response(const std::string& id, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  auto ready = [&] {
    auto it = requests_.find(id);
    return it == requests_.end() || it->second.status != RequestStatus::Pending;
  };
  cv_.wait_for(lock, timeout, ready);
  auto it = requests_.find(id);
  if (it == requests_.end() || it->second.status != RequestStatus::Answered || it->second.consumed) {
    return std::nullopt;
  }
  it->second.consumed = true;
  persist_locked();
  return it->second;
}

bool GuidanceStore::set(const std::string& task_id, Guidance guidance) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = entries_.insert_or_assign(task_id, std::move(guidance));
  return !inserted;
}

std::optional<Guidance> GuidanceStore::get(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(task_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

}  // namespace hila
