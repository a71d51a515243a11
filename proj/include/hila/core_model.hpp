#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hila {

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class TaskKind { MathNumeric, MathBoxed, MultipleChoice, Code, Generic };

std::string_view to_string(TaskKind kind);
/// Accepts the task-file spellings: math-numeric, math-boxed, multiple-choice,
/// code, generic. Throws std::invalid_argument otherwise.
TaskKind parse_task_kind(std::string_view text);

/// A problem instance. `difficulty` is only set for synthetic suites.
struct TaskInstance {
  std::string id;
  TaskKind kind = TaskKind::Generic;
  std::string prompt;
  std::optional<std::string> gold;
  std::vector<std::string> choices;
  std::optional<double> difficulty;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Strategic actions
// ---------------------------------------------------------------------------

enum class ActionType : std::uint8_t { Eval = 0, Create = 1, Defer = 2 };
inline constexpr std::size_t kNumActionTypes = 3;
inline constexpr std::array<ActionType, kNumActionTypes> kAllActionTypes{
    ActionType::Eval, ActionType::Create, ActionType::Defer};

std::string_view to_string(ActionType type);
ActionType parse_action_type(std::string_view text);

/// Eval(target) | Create | Defer. Serializes to exactly "EVAL <idx>",
/// "CREATE" or "DEFER".
class StrategicAction {
 public:
  static StrategicAction eval(std::size_t target) { return {ActionType::Eval, target}; }
  static StrategicAction create() { return {ActionType::Create, 0}; }
  static StrategicAction defer() { return {ActionType::Defer, 0}; }

  ActionType type() const { return type_; }
  /// Only meaningful for Eval.
  std::size_t target() const { return target_; }

  std::string serialize() const;

  friend bool operator==(const StrategicAction&, const StrategicAction&) = default;

 private:
  StrategicAction(ActionType type, std::size_t target) : type_(type), target_(target) {}
  ActionType type_;
  std::size_t target_;
};

// ---------------------------------------------------------------------------
// Transcript records
// ---------------------------------------------------------------------------

enum class OutputSource { SelfGenerated, CopiedFromPeer, Expert };
std::string_view to_string(OutputSource source);
OutputSource parse_output_source(std::string_view text);

struct TokenCounts {
  std::int64_t input = 0;
  std::int64_t output = 0;

  std::int64_t total() const { return input + output; }
  TokenCounts& operator+=(const TokenCounts& o) {
    input += o.input;
    output += o.output;
    return *this;
  }
  friend bool operator==(const TokenCounts&, const TokenCounts&) = default;
};

/// One agent's contribution to one round. Round 0 carries no action.
struct AgentTurn {
  std::optional<StrategicAction> action;
  std::string raw_output;
  std::optional<std::string> normalized_answer;
  OutputSource source = OutputSource::SelfGenerated;
  TokenCounts tokens;
};

struct RoundRecord {
  int round_index = 0;
  std::vector<AgentTurn> agents;

  std::vector<std::optional<std::string>> answers() const;
};

struct ActionCounts {
  std::int64_t eval = 0;
  std::int64_t create = 0;
  std::int64_t defer = 0;

  std::int64_t total() const { return eval + create + defer; }
  void add(ActionType type);
  friend bool operator==(const ActionCounts&, const ActionCounts&) = default;
};

struct EpisodeResult {
  std::string task_id;
  std::vector<RoundRecord> rounds;
  std::string final_answer;
  std::optional<bool> correct;
  ActionCounts actions;
  TokenCounts tokens;         // agent-side generation only
  std::int64_t expert_calls = 0;
  TokenCounts expert_tokens;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Cue vectors and cognitive state
// ---------------------------------------------------------------------------

enum class CueSchema { Social, Monitoring, Control };

inline constexpr std::size_t kSocialCues = 4;
inline constexpr std::size_t kMonitoringCues = 3;
inline constexpr std::size_t kControlCues = 3;
inline constexpr std::size_t kFeatureDim = kSocialCues + kMonitoringCues + kControlCues;

constexpr std::size_t cue_length(CueSchema schema) {
  switch (schema) {
    case CueSchema::Social: return kSocialCues;
    case CueSchema::Monitoring: return kMonitoringCues;
    case CueSchema::Control: return kControlCues;
  }
  return 0;
}

struct CueVector {
  CueSchema schema = CueSchema::Social;
  std::vector<double> values;
};

using FeatureVector = std::array<double, kFeatureDim>;

/// The policy state: text contexts plus the three structured cue families.
struct CognitiveState {
  std::string task_context;
  std::string self_context;
  std::vector<std::string> peer_contexts;
  CueVector social{CueSchema::Social, {}};
  CueVector monitoring{CueSchema::Monitoring, {}};
  CueVector control{CueSchema::Control, {}};

  /// soc ++ mon ++ ctrl, the parametric policy's input.
  FeatureVector features() const;
};

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

/// Extracts the final answer from a solver or expert output. Returns nullopt
/// when nothing is extractable; that absence is itself a monitoring signal.
std::optional<std::string> normalize_answer(std::string_view raw, TaskKind kind);

/// Canonical decimal string: strips thousands separators, leading zeros and
/// trailing fractional zeros. Returns nullopt when `token` is not a number.
std::optional<std::string> canonicalize_number(std::string_view token);

/// Plurality vote over present answers; ties go to the answer whose first
/// holder has the lowest agent index. Empty string when all are absent.
std::string aggregate_final(std::span<const std::optional<std::string>> answers);
std::string aggregate_final(const RoundRecord& last_round);

/// Number of whitespace-separated tokens.
std::size_t count_tokens(std::string_view text);
std::vector<std::string> whitespace_tokens(std::string_view text);

}  // namespace hila
