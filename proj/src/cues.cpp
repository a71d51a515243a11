#include "hila/cues.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace hila {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string render_line(std::string_view label, const CueVector& cv) {
  std::string out(label);
  out += ":";
  for (double v : cv.values) {
    out += " ";
    out += fixed6(v);
  }
  return out;
}

}  // namespace

CueVector extract_social(std::span<const std::optional<std::string>> answers, std::size_t self_index) {
  const std::size_t n = answers.size();
  if (n == 0) throw std::invalid_argument("extract_social needs at least one answer");
  if (self_index >= n) throw std::out_of_range("extract_social: self index out of range");

  std::size_t present = 0, matching_pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!answers[i]) continue;
    ++present;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (answers[j] && *answers[j] == *answers[i]) ++matching_pairs;
    }
  }
  const std::size_t pairs = present * (present - (present > 0 ? 1 : 0)) / 2;
  const double agreement = present < 2 ? 0.0 : static_cast<double>(matching_pairs) / static_cast<double>(pairs);

  // block_of[i] = index of the first agent holding the same answer.
  std::vector<std::size_t> block_of(n);
  std::vector<std::size_t> block_size(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    block_of[i] = i;
    if (answers[i]) {
      for (std::size_t j = 0; j < i; ++j) {
        if (answers[j] && *answers[j] == *answers[i]) {
          block_of[i] = j;
          break;
        }
      }
    }
    ++block_size[block_of[i]];
  }
  std::size_t distinct = 0, best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (block_size[i] == 0) continue;
    ++distinct;
    if (block_size[i] > block_size[best]) best = i;
  }

  const double dn = static_cast<double>(n);
  return {CueSchema::Social,
          {agreement, static_cast<double>(distinct) / dn, static_cast<double>(block_size[best]) / dn,
           block_of[self_index] == best ? 1.0 : 0.0}};
}

CueVector extract_monitoring(std::string_view output, TaskKind kind,
                             std::span<const std::optional<std::string>> previous_answers,
                             const CueConfig& config) {
  const auto current = normalize_answer(output, kind);
  const double extractable = current ? 1.0 : 0.0;
  const double completeness =
      config.completeness_saturation > 0
          ? clamp01(static_cast<double>(count_tokens(output)) / config.completeness_saturation)
          : 1.0;
  double stability = 0.0;
  if (!previous_answers.empty() && current && previous_answers.back() && *previous_answers.back() == *current) {
    stability = 1.0;
  }
  return {CueSchema::Monitoring, {extractable, completeness, stability}};
}

CueVector extract_control(int round_index, int max_rounds, std::span<const double> majority_history,
                          bool expert_used) {
  if (round_index < 0 || round_index >= max_rounds) {
    throw std::out_of_range("extract_control: round index must lie in [0, max_rounds)");
  }
  const double rounds_left =
      static_cast<double>(max_rounds - 1 - round_index) / static_cast<double>(std::max(1, max_rounds - 1));
  double progress = 0.5;
  if (majority_history.size() >= 2) {
    const double delta = majority_history[majority_history.size() - 1] - majority_history[majority_history.size() - 2];
    progress = clamp01(0.5 + delta / 2.0);
  }
  return {CueSchema::Control, {clamp01(rounds_left), progress, expert_used ? 1.0 : 0.0}};
}

std::string render_decision_signals(const CueVector& social, const CueVector& monitoring,
                                    const CueVector& control) {
  return render_line("social_consensus", social) + "\n" + render_line("metacognitive_monitoring", monitoring) +
         "\n" + render_line("cognitive_control", control);
}

}  // namespace hila
