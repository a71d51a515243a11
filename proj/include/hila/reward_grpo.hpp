#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hila/core_model.hpp"
#include "hila/meta_policy.hpp"

namespace hila {

struct RewardConfig {
  double c_create = 0.1;
  double c_defer = 0.2;
  /// Fixed at 1.0; kept so checkpoints record it.
  double scale = 1.0;

  /// Requires c_defer > c_create >= 0.
  void validate() const;
};

/// Eval -> R, Create -> R - c_create, Defer -> R(expert) - c_defer, where R is
/// the correctness of the output the action produces.
double compute_reward(ActionType action, bool correct, const RewardConfig& config);

/// Rewards centered on their mean; divided by the population stdev when
/// `normalize` is set and the stdev exceeds 1e-8. Requires at least 2 entries.
std::vector<double> compute_advantages(std::span<const double> rewards, bool normalize);

/// One decision state with every action type enumerated (K = 3).
struct GroupSample {
  FeatureVector features{};
  std::array<ActionType, kNumActionTypes> actions = kAllActionTypes;
  std::array<double, kNumActionTypes> rewards{};
  std::array<double, kNumActionTypes> advantages{};
  /// pi_old(actions[k] | s) at collection time.
  std::array<double, kNumActionTypes> behavior_probs{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::string task_id;
  int round = 0;
  /// Whitespace tokens of the expert reply for the Defer entry, when the
  /// outer loop's SFT term is in use.
  std::optional<std::vector<std::string>> defer_demo_tokens;

  /// Recomputes `advantages` from `rewards`.
  void set_advantages(bool normalize);
};

enum class Surrogate { Clip, Reinforce };
std::string_view to_string(Surrogate s);
Surrogate parse_surrogate(std::string_view text);

enum class OptimizerKind { Adam, Sgd };
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainerConfig {
  double learning_rate = 0.05;
  int epochs = 50;
  std::size_t batch_size = 64;
  double beta_kl = 0.02;
  double beta_ent = 0.0;
  double clip_eps = 0.2;
  Surrogate surrogate = Surrogate::Clip;
  bool normalize_advantages = true;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  bool cosine_decay = true;
  /// Discount factor of the decision process. No loss term uses it.
  double gamma = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double pg = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  /// pg + beta_kl * kl - beta_ent * entropy
  double inner = 0.0;
};

struct LossAndGrad {
  LossBreakdown loss;
  PolicyParams::Vector grad{};
};

/// Inner loss and its analytic gradient with respect to the trainable
/// parameters of `params`. `reference` is held fixed. The policy-gradient term
/// averages over (sample, action) pairs; KL and entropy average over samples.
LossAndGrad inner_loss_and_grad(const PolicyParams& params, const PolicyParams& reference,
                                std::span<const GroupSample> batch, const TrainerConfig& config);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t batch_id, const std::string& message)
      : std::runtime_error(message), batch_id_(batch_id) {}
  std::size_t batch_id() const { return batch_id_; }

 private:
  std::size_t batch_id_;
};

struct EpochTelemetry {
  int epoch = 0;
  /// Loss over the whole dataset after the epoch's updates.
  LossBreakdown loss;
  /// Mean action distribution over the probe states.
  ActionProbs probe_distribution{};
  double mean_reward = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<EpochTelemetry> telemetry;
  std::size_t steps = 0;
};

/// Offline mini-batch optimization. The reference policy is `initial` unless
/// `reference` is given. Probe states default to the dataset's own states.
/// Deterministic in config.seed. Throws TrainingError on a non-finite loss.
TrainResult train(const PolicyParams& initial, std::span<const GroupSample> dataset, const TrainerConfig& config,
                  std::span<const FeatureVector> probes = {}, const PolicyParams* reference = nullptr);

/// Mean of the policy's action distribution over `states`.
ActionProbs mean_distribution(const PolicyParams& params, std::span<const FeatureVector> states);

/// Writes epoch,l_pg,l_kl,l_entropy,l_total,p_eval,p_create,p_defer,mean_reward.
void write_telemetry_csv(const std::filesystem::path& path, std::span<const EpochTelemetry> telemetry);

}  // namespace hila
