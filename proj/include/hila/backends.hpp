#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hila/chat_client.hpp"
#include "hila/core_model.hpp"
#include "hila/demonstration.hpp"
#include "hila/pending_queue.hpp"

namespace hila {

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

enum class GenerationPurpose { Initial, Create };

struct GenerationRequest {
  const TaskInstance& task;
  std::size_t agent = 0;
  int round = 0;
  GenerationPurpose purpose = GenerationPurpose::Initial;
  const std::string& prompt;
  std::uint64_t seed = 0;
};

struct Generation {
  std::string text;
  TokenCounts tokens;
};

/// A solver. Implementations must tolerate concurrent calls.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual Generation generate(const GenerationRequest& request) = 0;
};

/// Desk-scale stand-in for an LLM solver: emits the gold answer with
/// probability `competence`, otherwise a distractor.
struct SyntheticAgentSpec {
  /// Competence per difficulty band; band = floor(difficulty * size), tasks
  /// without a difficulty use band 0.
  std::vector<double> competence{0.5};
  /// Overrides keyed by task family (the task kind name), set by the
  /// competence model when demonstrations have been assimilated.
  std::map<std::string, double> family_competence;
  std::size_t distractors = 3;
  std::size_t verbosity = 32;

  double competence_for(const TaskInstance& task) const;
  void validate() const;
};

/// Family key used by competence tracking.
std::string task_family(const TaskInstance& task);

/// Wrong answers for a task, deterministic and never equal to gold.
std::vector<std::string> distractor_pool(const TaskInstance& task, std::size_t count);

/// A solution text whose normalized answer is `answer`, padded to `verbosity`
/// whitespace tokens when the answer part is shorter.
std::string format_solution(const TaskInstance& task, const std::string& answer, std::size_t verbosity);

/// Deterministic in (spec, task, seed). Requires a gold answer.
Generation synthetic_generate(const SyntheticAgentSpec& spec, const TaskInstance& task, std::uint64_t seed);

class SyntheticAgent final : public AgentBackend {
 public:
  explicit SyntheticAgent(SyntheticAgentSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  Generation generate(const GenerationRequest& request) override;
  const SyntheticAgentSpec& spec() const { return spec_; }

 private:
  SyntheticAgentSpec spec_;
};

/// Replays fixed outputs keyed by (round, agent); used for protocol fixtures.
/// Create calls in round r return the scripted output for (r, agent).
class ScriptedAgent final : public AgentBackend {
 public:
  ScriptedAgent& set(int round, std::size_t agent, std::string output);
  Generation generate(const GenerationRequest& request) override;
  /// Number of generate() calls served so far.
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<int, std::size_t>, std::string> outputs_;
  std::size_t calls_ = 0;
};

class RemoteAgent final : public AgentBackend {
 public:
  explicit RemoteAgent(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  Generation generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<ChatClient> client_;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Experts
// ---------------------------------------------------------------------------

struct ExpertRequest {
  const TaskInstance& task;
  int round = 0;
  std::size_t agent = 0;
  /// Base prompt the expert answers.
  const std::string& prompt;
  /// One paragraph listing the agents' current candidate answers.
  const std::string& state_summary;
  ExpertLevel level = ExpertLevel::Reasoning;
  std::uint64_t seed = 0;
};

struct ExpertReply {
  std::string text;
  ExpertLevel level = ExpertLevel::Reasoning;
  TokenCounts tokens;
};

/// Raised when a human expert does not answer in time. The request stays in
/// the queue, so re-running the episode resumes from it.
class ExpertTimeout : public std::runtime_error {
 public:
  ExpertTimeout(std::string request_id, const std::string& message)
      : std::runtime_error(message), request_id_(std::move(request_id)) {}
  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

class ExpertBackend {
 public:
  virtual ~ExpertBackend() = default;
  virtual ExpertReply respond(const ExpertRequest& request) = 0;
  /// Name recorded as the demonstration source.
  virtual std::string kind() const = 0;
  virtual bool supports(ExpertLevel) const { return true; }
};

/// Always right (requires gold).
class OracleExpert final : public ExpertBackend {
 public:
  explicit OracleExpert(std::size_t verbosity = 48) : verbosity_(verbosity) {}
  ExpertReply respond(const ExpertRequest& request) override;
  std::string kind() const override { return "oracle"; }

 private:
  std::size_t verbosity_;
};

/// Right with probability `reliability`, otherwise a distractor.
class NoisyExpert final : public ExpertBackend {
 public:
  explicit NoisyExpert(double reliability, std::size_t verbosity = 48);
  ExpertReply respond(const ExpertRequest& request) override;
  std::string kind() const override { return "noisy"; }
  double reliability() const { return reliability_; }

 private:
  double reliability_;
  std::size_t verbosity_;
};

/// A strong model queried over the chat-completion protocol.
class RemoteProxyExpert final : public ExpertBackend {
 public:
  explicit RemoteProxyExpert(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  ExpertReply respond(const ExpertRequest& request) override;
  std::string kind() const override { return "remote-proxy"; }

  /// What the proxy is sent: the base prompt plus the state summary paragraph.
  static std::string render_request(const ExpertRequest& request);

 private:
  std::shared_ptr<ChatClient> client_;
};

/// Routes the request to the pending queue and waits for a human answer.
class HumanConsoleExpert final : public ExpertBackend {
 public:
  HumanConsoleExpert(PendingQueue& queue, std::chrono::milliseconds timeout = std::chrono::minutes(30))
      : queue_(queue), timeout_(timeout) {}
  ExpertReply respond(const ExpertRequest& request) override;
  std::string kind() const override { return "human-console"; }

 private:
  PendingQueue& queue_;
  std::chrono::milliseconds timeout_;
};

/// "Agent 0: 42; Agent 1: (no answer); ..." for expert requests.
std::string summarize_candidates(std::span<const std::optional<std::string>> answers);

}  // namespace hila
