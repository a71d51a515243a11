#include "hila/service.hpp"

#include <httplib.h>

#include "hila/json_io.hpp"

namespace hila {

void EpisodeRegistry::publish(const std::string& id, nlohmann::json transcript) {
  std::lock_guard lock(mu_);
  live_[id] = std::move(transcript);
}

std::optional<nlohmann::json> EpisodeRegistry::get(const std::string& id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = live_.find(id); it != live_.end()) return it->second;
  }
  if (dir_) {
    // Ids are task ids; refuse anything that could leave the directory.
    if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) return std::nullopt;
    const auto path = *dir_ / (id + ".json");
    if (std::filesystem::exists(path)) return read_json_file(path);
  }
  return std::nullopt;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason) {
  send_json(res, status, {{"error", reason}});
}

// Parses an object body and pulls required string fields; writes a 400 on failure.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res,
                               std::initializer_list<const char*> fields) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error&) {
    send_error(res, 400, "request body is not valid JSON");
    return std::nullopt;
  }
  if (!body.is_object()) {
    send_error(res, 400, "request body must be a JSON object");
    return std::nullopt;
  }
  for (const char* f : fields) {
    auto it = body.find(f);
    if (it == body.end() || !it->is_string()) {
      send_error(res, 400, std::string("missing string field '") + f + "'");
      return std::nullopt;
    }
  }
  return body;
}

std::optional<ExpertLevel> parse_level(const json& body, httplib::Response& res) {
  try {
    return parse_expert_level(body.at("level").get<std::string>());
  } catch (const std::exception&) {
    send_error(res, 400, "level must be 'idea' or 'reasoning'");
    return std::nullopt;
  }
}

}  // namespace

Service::Service(ServiceContext context) : ctx_(std::move(context)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
  auto& s = *server_;
  s.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

  s.Get("/api/pending", [this](const httplib::Request&, httplib::Response& res) {
    json arr = json::array();
    for (const auto& r : ctx_.queue.pending()) arr.push_back(r);
    send_json(res, 200, arr);
  });

  s.Post("/api/respond", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res, {"id", "text", "level"});
    if (!body) return;
    auto level = parse_level(*body, res);
    if (!level) return;
    const std::string text = body->at("text").get<std::string>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
      send_error(res, 400, "text must not be blank");
      return;
    }
    const std::string id = body->at("id").get<std::string>();
    switch (ctx_.queue.respond(id, text, *level)) {
      case RespondStatus::Ok: send_json(res, 200, {{"id", id}, {"status", "answered"}}); break;
      case RespondStatus::NotFound: send_error(res, 404, "unknown request id " + id); break;
      case RespondStatus::Conflict: send_error(res, 409, "request " + id + " is no longer pending"); break;
    }
  });

  s.Post("/api/guidance", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res, {"task_id", "level", "text"});
    if (!body) return;
    auto level = parse_level(*body, res);
    if (!level) return;
    const std::string task_id = body->at("task_id").get<std::string>();
    if (ctx_.known_tasks && !ctx_.known_tasks->contains(task_id)) {
      send_error(res, 404, "unknown task id " + task_id);
      return;
    }
    const bool replaced = ctx_.guidance.set(task_id, Guidance{*level, body->at("text").get<std::string>()});
    send_json(res, 200, {{"task_id", task_id}, {"replaced", replaced}});
  });

  s.Get(R"(/api/episodes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    try {
      if (auto t = ctx_.episodes.get(id)) {
        send_json(res, 200, *t);
        return;
      }
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
      return;
    }
    send_error(res, 404, "unknown episode " + id);
  });
}

int Service::start(const std::string& host, int port) {
  if (thread_.joinable()) throw std::logic_error("service already started");
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Service::stop() {
  if (thread_.joinable()) {
    server_->stop();
    thread_.join();
  }
  ctx_.queue.flush();
}

}  // namespace hila
