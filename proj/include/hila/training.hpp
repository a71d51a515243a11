#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hila/backends.hpp"
#include "hila/collaboration.hpp"
#include "hila/outer_loop.hpp"
#include "hila/reward_grpo.hpp"

namespace hila {

/// Synthetic agents and expert used for desk-scale runs.
struct SyntheticSetup {
  SyntheticAgentSpec agent;
  /// "oracle" or "noisy".
  std::string expert = "oracle";
  double expert_reliability = 0.8;
  std::size_t expert_verbosity = 48;
};

struct Backends {
  std::vector<std::unique_ptr<AgentBackend>> owned;
  std::vector<AgentBackend*> agents;
  std::unique_ptr<ExpertBackend> expert;
};

Backends make_synthetic_backends(const SyntheticSetup& setup, std::size_t num_agents);

/// `count` tasks cycling through math-numeric, multiple-choice and math-boxed,
/// with gold answers and difficulties drawn from `seed`.
std::vector<TaskInstance> synthetic_suite(std::size_t count, std::uint64_t seed, const std::string& id_prefix = "syn");

// ---------------------------------------------------------------------------
// Grouped rollouts
// ---------------------------------------------------------------------------

struct CollectOptions {
  EpisodeConfig episode;
  RewardConfig reward;
  bool normalize_advantages = true;
  /// Attach the expert reply's tokens to each group for the SFT term.
  bool keep_demo_tokens = false;
  /// Receives a demonstration for every executed Defer when set.
  DemonstrationStore* demos = nullptr;
};

struct Collection {
  std::vector<GroupSample> groups;
  std::vector<EpisodeResult> episodes;
};

/// Runs one episode per task (seeded by episode_seed(options.episode.seed,
/// task id)) and turns every decision state into a group with all three
/// action types executed against that state. Requires gold answers.
Collection collect_groups(std::span<const TaskInstance> tasks, const CollectOptions& options,
                          std::span<AgentBackend* const> agents, ExpertBackend& expert, const MetaPolicy& policy);

/// Runs one episode per task without collecting groups.
std::vector<EpisodeResult> run_episodes(std::span<const TaskInstance> tasks, const EpisodeConfig& config,
                                        std::span<AgentBackend* const> agents, ExpertBackend& expert,
                                        const MetaPolicy& policy, const EpisodeHooks& hooks = {});

// ---------------------------------------------------------------------------
// Collect -> train iterations
// ---------------------------------------------------------------------------

struct PolicyTrainingConfig {
  EpisodeConfig episode;
  RewardConfig reward;
  TrainerConfig trainer;
  /// Each iteration collects with the current policy, which becomes the
  /// behavior policy for that iteration's updates.
  int iterations = 8;
};

struct PolicyTrainingResult {
  PolicyParams params;
  std::vector<EpochTelemetry> telemetry;
  std::size_t steps = 0;
  std::vector<GroupSample> last_groups;
  std::size_t groups_collected = 0;
};

/// The reference policy for the KL term is `initial` throughout.
PolicyTrainingResult train_policy(std::span<const TaskInstance> tasks, const PolicyTrainingConfig& config,
                                  std::span<AgentBackend* const> agents, ExpertBackend& expert,
                                  const PolicyParams& initial, DemonstrationStore* demos = nullptr,
                                  std::span<const FeatureVector> probes = {});

/// Decision-state features seen by a uniform policy on `tasks`.
std::vector<FeatureVector> probe_states(std::span<const TaskInstance> tasks, const EpisodeConfig& config,
                                        std::span<AgentBackend* const> agents, ExpertBackend& expert);

// ---------------------------------------------------------------------------
// Train -> assimilate -> retrain
// ---------------------------------------------------------------------------

struct DualLoopConfig {
  SyntheticSetup setup;
  PolicyTrainingConfig training;
  double eta = 0.05;
};

struct StageMetrics {
  double p_defer = 0.0;
  double accuracy = 0.0;
};

struct DualLoopReport {
  StageMetrics pre;
  StageMetrics post;
  PolicyParams pre_params;
  PolicyParams post_params;
  CompetenceModel competence;
  std::size_t demonstrations = 0;
  std::size_t assimilated = 0;
};

DualLoopReport run_dual_loop(std::span<const TaskInstance> train_tasks, std::span<const TaskInstance> eval_tasks,
                             const DualLoopConfig& config);

}  // namespace hila
