#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hila/core_model.hpp"
#include "hila/meta_policy.hpp"
#include "hila/training.hpp"

namespace hila {

struct RunSummary {
  std::size_t episodes = 0;
  /// Episodes with a gold answer; accuracy is taken over these.
  std::size_t judged = 0;
  double accuracy = 0.0;
  ActionCounts actions;
  /// (eval, create, defer) over all round >= 1 decisions; absent when there were none.
  std::optional<ActionProbs> distribution;
  /// Mean over episodes with decisions of the fraction of decisions that deferred.
  double defer_rate = 0.0;
  TokenCounts tokens;
  double avg_input_tokens = 0.0;
  double avg_output_tokens = 0.0;
  double avg_total_tokens = 0.0;
  std::int64_t expert_calls = 0;
  std::string config_fingerprint;
  std::vector<std::uint64_t> seeds;
};

/// Requires at least one episode.
RunSummary summarize(std::span<const EpisodeResult> episodes);

/// Short hex digest of a resolved configuration document.
std::string config_fingerprint(const std::string& resolved_config);

void write_summary_csv(const std::filesystem::path& path, std::span<const RunSummary> rows);

enum class SweepAxis { Agents, Rounds, CDefer };
std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view text);

struct SweepBase {
  EpisodeConfig episode;
  SyntheticSetup setup;
  /// Policy for the agents and rounds axes. Defaults to the uniform parametric policy.
  std::shared_ptr<const MetaPolicy> policy;
  /// Used by the c_defer axis, which trains a policy per cell before evaluating it.
  PolicyTrainingConfig training;
  /// Cells evaluated concurrently.
  std::size_t parallelism = 1;
};

struct SweepRow {
  SweepAxis axis = SweepAxis::Agents;
  double value = 0.0;
  /// nullopt for the seed-averaged row.
  std::optional<std::uint64_t> seed;
  double accuracy = 0.0;
  std::optional<ActionProbs> distribution;
  /// Token totals over the cell's episodes (means across seeds on averaged rows).
  double tokens_in = 0.0;
  double tokens_out = 0.0;
  double tokens_total = 0.0;
  /// Full summary of a per-seed cell.
  std::optional<RunSummary> summary;
  /// Set when the cell failed; the sweep carries on.
  std::optional<std::string> error;
};

/// One row per (value, seed) in input order, each value followed by its
/// seed-averaged row.
std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values, std::span<const std::uint64_t> seeds,
                            std::span<const TaskInstance> tasks, const SweepBase& base);

/// axis,value,seed,accuracy,p_eval,p_create,p_defer,tokens_in,tokens_out,tokens_total
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace hila
