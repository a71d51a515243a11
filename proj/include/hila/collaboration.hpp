#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hila/backends.hpp"
#include "hila/core_model.hpp"
#include "hila/cues.hpp"
#include "hila/meta_policy.hpp"
#include "hila/pending_queue.hpp"

namespace hila {

enum class PolicyMode { Parametric, LlmPrompted, Scripted };
std::string_view to_string(PolicyMode mode);
PolicyMode parse_policy_mode(std::string_view text);

struct EpisodeConfig {
  std::size_t num_agents = 3;
  int num_rounds = 3;
  PolicyMode policy_mode = PolicyMode::Parametric;
  std::string expert_backend = "oracle";
  /// Proactive expert input, prepended to every agent's round-0 prompt.
  std::optional<Guidance> guidance;
  std::uint64_t seed = 0;
  /// Level requested from the expert on DEFER.
  ExpertLevel defer_level = ExpertLevel::Reasoning;
  /// Attempts per agent call before recording an empty output.
  int agent_attempts = 3;
  /// Run Create generations of a round concurrently.
  bool parallel = false;
  CueConfig cues;

  void validate() const;
};

/// Outcome of executing one action type at a decision point, used to build
/// GRPO groups. `correct` is nullopt when the task has no gold answer.
struct RolloutOutcome {
  std::string text;
  std::optional<std::string> answer;
  std::optional<bool> correct;
};

struct DecisionPoint {
  const TaskInstance& task;
  std::size_t agent = 0;
  int round = 0;
  FeatureVector features{};
  /// Behavior-policy probabilities, when the policy exposes them.
  std::optional<ActionProbs> behavior_probs;
  StrategicAction chosen = StrategicAction::create();
  /// Executes any action type at this state without changing the episode.
  std::function<RolloutOutcome(ActionType)> rollout;
};

struct DeferEvent {
  const TaskInstance& task;
  int round = 0;
  /// The first deferring agent, which triggered the call.
  std::size_t trigger_agent = 0;
  std::vector<std::size_t> deferring_agents;
  std::string state_snapshot;
  const ExpertReply& reply;
  std::string expert_kind;
  std::uint64_t episode_seed = 0;
};

struct EpisodeHooks {
  std::function<void(const DecisionPoint&)> on_decision;
  std::function<void(const DeferEvent&)> on_defer;
};

/// The task prompt for round 0: the base prompt with any proactive guidance
/// placed in front of it.
std::string initial_prompt(const TaskInstance& task, const std::optional<Guidance>& guidance);

/// Snapshot the policy sees for `agent` before acting in `round` (>= 1).
/// `transcript` holds rounds 0..round-1.
CognitiveState build_state(const TaskInstance& task, std::span<const RoundRecord> transcript, std::size_t agent,
                           int round, const EpisodeConfig& config);

std::string render_meta_policy_prompt(const TaskInstance& task, const CognitiveState& state,
                                      std::span<const RoundRecord> transcript, std::size_t agent,
                                      const EpisodeConfig& config);

/// Collaboration prompt used by CREATE.
std::string render_collaboration_prompt(const TaskInstance& task, std::span<const RoundRecord> transcript,
                                        std::size_t agent, const EpisodeConfig& config);

/// Runs the full multi-round protocol. `agents` must hold num_agents entries.
/// Throws ExpertTimeout when a human expert does not answer in time.
EpisodeResult run_episode(const TaskInstance& task, const EpisodeConfig& config, std::span<AgentBackend* const> agents,
                          ExpertBackend& expert, const MetaPolicy& policy, const EpisodeHooks& hooks = {});

/// Per-episode seed derived from a run's master seed and the task id.
std::uint64_t episode_seed(std::uint64_t master_seed, const std::string& task_id);

}  // namespace hila
