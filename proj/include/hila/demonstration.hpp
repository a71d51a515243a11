#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hila {

/// idea = a concise hint, reasoning = a full solution ending in an answer.
enum class ExpertLevel { Idea, Reasoning };

std::string_view to_string(ExpertLevel level);
ExpertLevel parse_expert_level(std::string_view text);

/// An expert response produced by a DEFER, kept as supervised data.
struct Demonstration {
  std::string task_id;
  std::string state_snapshot;  // the prompt the expert answered
  ExpertLevel level = ExpertLevel::Reasoning;
  std::string text;
  std::optional<std::string> normalized_answer;
  std::string source;          // expert kind: oracle, noisy, remote-proxy, human-console
  std::int64_t timestamp = 0;  // logical sequence number assigned by the store
  int round_index = 0;
  std::size_t agent = 0;       // the agent whose DEFER triggered the call
  std::uint64_t episode_seed = 0;
};

}  // namespace hila
