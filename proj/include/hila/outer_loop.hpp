#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hila/backends.hpp"
#include "hila/collaboration.hpp"
#include "hila/demonstration.hpp"
#include "hila/reward_grpo.hpp"

namespace hila {

// ---------------------------------------------------------------------------
// Demonstration store
// ---------------------------------------------------------------------------

/// Append-only JSONL store of expert demonstrations. Each (task, round,
/// triggering agent, episode seed) is stored once, so replays are no-ops.
class DemonstrationStore {
 public:
  /// Loads existing records when `path` exists. Without a path the store is in-memory only.
  explicit DemonstrationStore(std::optional<std::filesystem::path> path = std::nullopt);

  /// Assigns the next timestamp and appends. Returns false for a duplicate.
  bool append(Demonstration demo);
  std::vector<Demonstration> snapshot() const;
  std::size_t size() const;
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::vector<Demonstration> demos_;
  std::int64_t next_timestamp_ = 1;
};

Demonstration make_demonstration(const DeferEvent& event);

/// Builds the demonstration for a Defer event and appends it.
bool record_demonstration(DemonstrationStore& store, const DeferEvent& event);

// ---------------------------------------------------------------------------
// Supervised term
// ---------------------------------------------------------------------------

/// Per-token log-probabilities of a sequence given a context.
class TokenModel {
 public:
  virtual ~TokenModel() = default;
  virtual std::vector<double> log_probs(const std::string& context, std::span<const std::string> tokens) const = 0;
};

/// Equal probability for every symbol of a fixed vocabulary.
class UniformTokenModel final : public TokenModel {
 public:
  explicit UniformTokenModel(std::vector<std::string> vocabulary);
  std::vector<double> log_probs(const std::string& context, std::span<const std::string> tokens) const override;

 private:
  std::vector<std::string> vocab_;
};

/// Context-independent categorical distribution with trainable logits.
class CategoricalTokenModel final : public TokenModel {
 public:
  CategoricalTokenModel(std::vector<std::string> vocabulary, std::vector<double> logits);
  /// Equal logits.
  explicit CategoricalTokenModel(std::vector<std::string> vocabulary);

  std::vector<double> log_probs(const std::string& context, std::span<const std::string> tokens) const override;
  std::vector<double> probabilities() const;

  /// Gradient of the sequence NLL with respect to the logits.
  std::vector<double> nll_grad(std::span<const std::string> tokens) const;

  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::vector<double>& logits() { return logits_; }
  const std::vector<double>& logits() const { return logits_; }

 private:
  std::size_t index_of(const std::string& token) const;
  std::vector<std::string> vocab_;
  std::vector<double> logits_;
};

class OutOfSupportError : public std::runtime_error {
 public:
  OutOfSupportError(std::size_t position, const std::string& token)
      : std::runtime_error("token '" + token + "' at position " + std::to_string(position) +
                           " has zero probability"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// -sum_i log p(t_i | context, t_<i). Throws OutOfSupportError on a zero-probability token.
double sft_loss(const TokenModel& model, const std::string& context, std::span<const std::string> tokens);

/// inner + lambda * mean over the batch entries of 1[action = Defer] * sft.
/// `sft_losses` and `actions` are parallel; entries for other actions are ignored.
double total_loss(double inner, std::span<const double> sft_losses, std::span<const ActionType> actions,
                  double lambda_sft);

struct JointLossAndGrad {
  double total = 0.0;
  LossBreakdown inner;
  double mean_sft = 0.0;  // mean SFT loss over the defer entries
  PolicyParams::Vector policy_grad{};
  std::vector<double> token_grad;
};

/// Full objective over a batch of groups: the inner loss plus the SFT term on
/// each group's Defer entry (samples without demo tokens contribute zero).
JointLossAndGrad joint_loss_and_grad(const PolicyParams& params, const PolicyParams& reference,
                                     std::span<const GroupSample> batch, const TrainerConfig& config,
                                     const CategoricalTokenModel& model, double lambda_sft);

enum class JointSchedule { Interleaved, Staged };
std::string_view to_string(JointSchedule s);
JointSchedule parse_joint_schedule(std::string_view text);

struct JointTrainResult {
  PolicyParams params;
  std::vector<double> token_logits;
  std::vector<double> total_loss;  // per epoch, over the whole dataset
};

/// Interleaved: one step on the joint objective per batch. Staged: the inner
/// loop for all epochs, then the SFT term for the same number of epochs.
JointTrainResult train_joint(const PolicyParams& initial, CategoricalTokenModel model,
                             std::span<const GroupSample> dataset, const TrainerConfig& config, double lambda_sft,
                             JointSchedule schedule);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Writes {prompt, completion, level, task_id, source} lines sorted by
/// timestamp. Returns the number of records written.
std::size_t export_sft(std::span<const Demonstration> demos, const std::filesystem::path& out,
                       std::optional<ExpertLevel> level_filter = std::nullopt);

// ---------------------------------------------------------------------------
// Competence growth (synthetic agents)
// ---------------------------------------------------------------------------

struct CompetenceModel {
  std::map<std::string, double> families;
  double eta = 0.05;

  /// Competence for a family, or `fallback` when it has not been seen.
  double get(const std::string& family, double fallback) const;
  void validate() const;
};

/// p <- p + eta (1 - p) for the demonstration's task family when its answer
/// matches gold. Other demonstrations leave the model unchanged. Returns
/// whether an update happened. Unseen families start from `base_competence`.
bool assimilate(CompetenceModel& model, const Demonstration& demo, const TaskInstance& task,
                double base_competence);

/// The agent spec with the model's families written into family_competence.
SyntheticAgentSpec apply_competence(SyntheticAgentSpec spec, const CompetenceModel& model);

}  // namespace hila
