#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hila/core_model.hpp"
#include "hila/demonstration.hpp"
#include "hila/meta_policy.hpp"
#include "hila/outer_loop.hpp"
#include "hila/pending_queue.hpp"
#include "hila/reward_grpo.hpp"

namespace hila {

using nlohmann::json;

void to_json(json& j, const TokenCounts& t);
void from_json(const json& j, TokenCounts& t);
void to_json(json& j, const ActionCounts& c);
void from_json(const json& j, ActionCounts& c);

/// Task file record: {id, kind, prompt, gold?, choices?, difficulty?}. A
/// numeric gold is accepted and canonicalized.
void to_json(json& j, const TaskInstance& t);
void from_json(const json& j, TaskInstance& t);

void to_json(json& j, const AgentTurn& t);
void from_json(const json& j, AgentTurn& t);
void to_json(json& j, const RoundRecord& r);
void from_json(const json& j, RoundRecord& r);
void to_json(json& j, const EpisodeResult& e);
void from_json(const json& j, EpisodeResult& e);

/// {schema: "hila-policy-v1", d, weights, biases, temperature}
void to_json(json& j, const PolicyParams& p);
void from_json(const json& j, PolicyParams& p);

/// {features, actions, rewards, behavior_probs, task_id, round[, defer_demo_tokens]}.
/// Advantages are not stored; readers recompute them.
void to_json(json& j, const GroupSample& s);
void from_json(const json& j, GroupSample& s);

void to_json(json& j, const PendingRequest& r);
void from_json(const json& j, PendingRequest& r);
void to_json(json& j, const Demonstration& d);
void from_json(const json& j, Demonstration& d);
void to_json(json& j, const CompetenceModel& m);
void from_json(const json& j, CompetenceModel& m);
void to_json(json& j, const Guidance& g);
void from_json(const json& j, Guidance& g);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One task per non-blank line. Throws DataError naming the line on bad input
/// or duplicate ids.
std::vector<TaskInstance> load_tasks(const std::filesystem::path& path);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const json> rows);

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline, written via a temporary file.
void write_json_file(const std::filesystem::path& path, const json& value);

PolicyParams load_policy(const std::filesystem::path& path);
void save_policy(const std::filesystem::path& path, const PolicyParams& params);

std::vector<GroupSample> load_groups(const std::filesystem::path& path, bool normalize_advantages);
void save_groups(const std::filesystem::path& path, std::span<const GroupSample> groups);

}  // namespace hila
