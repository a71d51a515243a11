#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "hila/core_model.hpp"

namespace hila {

struct CueConfig {
  /// Output length (whitespace tokens) at which `completeness` saturates.
  double completeness_saturation = 64.0;
};

/// Social consensus cues over the current round's answers:
/// [agreement_rate, distinct_frac, majority_strength, self_in_majority].
///
/// Absent answers are singleton blocks. Agreement only counts pairs of present
/// answers. The majority block is the largest one; ties go to the block whose
/// first member has the lowest agent index.
CueVector extract_social(std::span<const std::optional<std::string>> answers, std::size_t self_index);

/// Monitoring cues: [extractable, completeness, stability].
/// `previous_answers` are the agent's answers in earlier rounds, oldest first;
/// stability compares the current answer against the last of them.
CueVector extract_monitoring(std::string_view output, TaskKind kind,
                             std::span<const std::optional<std::string>> previous_answers,
                             const CueConfig& config = {});

/// Control cues: [rounds_left_frac, progress, expert_used].
/// `majority_history` holds majority_strength per observed round, oldest first.
CueVector extract_control(int round_index, int max_rounds, std::span<const double> majority_history,
                          bool expert_used);

/// The three family lines rendered into the meta-policy prompt, 6 decimals each.
std::string render_decision_signals(const CueVector& social, const CueVector& monitoring,
                                    const CueVector& control);

}  // namespace hila
