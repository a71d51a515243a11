#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "hila/core_model.hpp"

namespace hila {

/// Linear-softmax policy over the three action types.
/// logits = (W * features + b) / temperature, W stored row-major (action x feature).
struct PolicyParams {
  static constexpr std::size_t kWeights = kNumActionTypes * kFeatureDim;
  static constexpr std::size_t kTrainable = kWeights + kNumActionTypes;
  using Vector = std::array<double, kTrainable>;

  std::array<double, kWeights> weights{};
  std::array<double, kNumActionTypes> biases{};
  double temperature = 1.0;

  double& weight(ActionType a, std::size_t feature) {
    return weights[static_cast<std::size_t>(a) * kFeatureDim + feature];
  }
  double weight(ActionType a, std::size_t feature) const {
    return weights[static_cast<std::size_t>(a) * kFeatureDim + feature];
  }
  double& bias(ActionType a) { return biases[static_cast<std::size_t>(a)]; }
  double bias(ActionType a) const { return biases[static_cast<std::size_t>(a)]; }

  /// weights followed by biases; temperature is not trainable.
  Vector flatten() const;
  static PolicyParams unflatten(const Vector& v, double temperature = 1.0);

  /// Throws std::invalid_argument on non-finite entries or temperature <= 0.
  void validate() const;
};

using ActionProbs = std::array<double, kNumActionTypes>;

struct ActionDistribution {
  ActionProbs probs{};
  std::optional<std::size_t> eval_target;

  double prob(ActionType a) const { return probs[static_cast<std::size_t>(a)]; }
};

ActionDistribution action_distribution(const PolicyParams& params, const FeatureVector& features);

/// Max-subtracted softmax.
ActionProbs softmax(const ActionProbs& logits);

/// Index into `peer_answers` of a peer holding the plurality answer (lowest
/// index on ties, lowest index overall when nothing is extractable).
std::size_t resolve_eval_target(std::span<const std::optional<std::string>> peer_answers);

class ActionParseError : public std::runtime_error {
 public:
  enum class Reason { NoActionLine, IndexOutOfRange };
  ActionParseError(Reason reason, std::string offending_text, const std::string& message)
      : std::runtime_error(message), reason_(reason), text_(std::move(offending_text)) {}
  Reason reason() const { return reason_; }
  const std::string& text() const { return text_; }

 private:
  Reason reason_;
  std::string text_;
};

/// First line (top to bottom, surrounding whitespace ignored, case-sensitive)
/// that reads "DEFER", "CREATE" or "EVAL k". Throws ActionParseError.
StrategicAction parse_action_line(std::string_view text, std::size_t num_agents);

struct LogProbGrad {
  double log_prob = 0.0;
  PolicyParams::Vector grad{};
};

/// log pi(action | features) and its analytic gradient with respect to the
/// flattened trainable parameters.
LogProbGrad log_prob_and_grad(const PolicyParams& params, const FeatureVector& features, ActionType action);

// ---------------------------------------------------------------------------
// Decision-making policies used by the collaboration engine
// ---------------------------------------------------------------------------

struct DecisionContext {
  const TaskInstance& task;
  const CognitiveState& state;
  std::size_t agent = 0;
  int round = 0;
  std::size_t num_agents = 0;
  /// Latest answers of every agent, indexed by agent.
  std::span<const std::optional<std::string>> answers;
  /// Rendered meta-policy prompt.
  const std::string& prompt;
  std::uint64_t seed = 0;
};

struct Decision {
  StrategicAction action = StrategicAction::create();
  TokenCounts tokens;
};

class MetaPolicy {
 public:
  virtual ~MetaPolicy() = default;
  virtual Decision decide(const DecisionContext& ctx) const = 0;
  /// Probabilities of the three action types in this state, when the policy has them.
  virtual std::optional<ActionProbs> probabilities(const DecisionContext&) const { return std::nullopt; }
};

/// Agent index that an Eval issued by `agent` copies: the plurality holder
/// among its peers, or itself when it has no peers.
std::size_t eval_target_for(std::size_t agent, std::span<const std::optional<std::string>> answers);

class ParametricPolicy final : public MetaPolicy {
 public:
  explicit ParametricPolicy(PolicyParams params) : params_(std::move(params)) { params_.validate(); }
  Decision decide(const DecisionContext& ctx) const override;
  std::optional<ActionProbs> probabilities(const DecisionContext& ctx) const override;
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

/// Fixed action per (round, agent); anything unscripted falls back to `fallback`.
class ScriptedPolicy final : public MetaPolicy {
 public:
  explicit ScriptedPolicy(StrategicAction fallback = StrategicAction::create()) : fallback_(fallback) {}
  ScriptedPolicy& set(int round, std::size_t agent, StrategicAction action);
  Decision decide(const DecisionContext& ctx) const override;

 private:
  std::map<std::pair<int, std::size_t>, StrategicAction> script_;
  StrategicAction fallback_;
};

/// Sends the rendered meta-policy prompt to a text model and parses the reply.
class LlmPromptedPolicy final : public MetaPolicy {
 public:
  using Completion = std::function<std::pair<std::string, TokenCounts>(const std::string& prompt)>;

  LlmPromptedPolicy(Completion complete, int max_attempts = 2)
      : complete_(std::move(complete)), max_attempts_(max_attempts) {}
  /// Unparseable replies are retried; after the last attempt the agent falls back to CREATE.
  Decision decide(const DecisionContext& ctx) const override;

 private:
  Completion complete_;
  int max_attempts_;
};

}  // namespace hila
