#include "hila/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include "hila/rng.hpp"

namespace hila {

RunSummary summarize(std::span<const EpisodeResult> episodes) {
  if (episodes.empty()) throw std::invalid_argument("summarize needs at least one episode");
  RunSummary s;
  s.episodes = episodes.size();
  std::size_t correct = 0, with_decisions = 0;
  double defer_frac_sum = 0.0;
  for (const auto& e : episodes) {
    if (e.correct) {
      ++s.judged;
      if (*e.correct) ++correct;
    }
    s.actions.eval += e.actions.eval;
    s.actions.create += e.actions.create;
    s.actions.defer += e.actions.defer;
    if (e.actions.total() > 0) {
      ++with_decisions;
      defer_frac_sum += static_cast<double>(e.actions.defer) / static_cast<double>(e.actions.total());
    }
    s.tokens += e.tokens;
    s.expert_calls += e.expert_calls;
    if (std::find(s.seeds.begin(), s.seeds.end(), e.seed) == s.seeds.end()) s.seeds.push_back(e.seed);
  }
  s.accuracy = s.judged ? static_cast<double>(correct) / static_cast<double>(s.judged) : 0.0;
  if (const auto total = s.actions.total(); total > 0) {
    const double d = static_cast<double>(total);
    s.distribution = ActionProbs{static_cast<double>(s.actions.eval) / d, static_cast<double>(s.actions.create) / d,
                                 static_cast<double>(s.actions.defer) / d};
  }
  s.defer_rate = with_decisions ? defer_frac_sum / static_cast<double>(with_decisions) : 0.0;
  const double n = static_cast<double>(s.episodes);
  s.avg_input_tokens = static_cast<double>(s.tokens.input) / n;
  s.avg_output_tokens = static_cast<double>(s.tokens.output) / n;
  s.avg_total_tokens = static_cast<double>(s.tokens.total()) / n;
  return s;
}

std::string config_fingerprint(const std::string& resolved_config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(resolved_config)));
  return buf;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string dist_cols(const std::optional<ActionProbs>& d) {
  if (!d) return ",,";
  return num((*d)[0]) + "," + num((*d)[1]) + "," + num((*d)[2]);
}

}  // namespace

void write_summary_csv(const std::filesystem::path& path, std::span<const RunSummary> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "episodes,accuracy,p_eval,p_create,p_defer,defer_rate,avg_tokens_in,avg_tokens_out,avg_tokens_total,"
         "expert_calls,config_fingerprint,seeds\n";
  for (const auto& s : rows) {
    std::string seeds;
    for (auto sd : s.seeds) seeds += (seeds.empty() ? "" : " ") + std::to_string(sd);
    out << s.episodes << "," << num(s.accuracy) << "," << dist_cols(s.distribution) << "," << num(s.defer_rate) << ","
        << num(s.avg_input_tokens) << "," << num(s.avg_output_tokens) << "," << num(s.avg_total_tokens) << ","
        << s.expert_calls << "," << s.config_fingerprint << "," << seeds << "\n";
  }
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Agents: return "agents";
    case SweepAxis::Rounds: return "rounds";
    case SweepAxis::CDefer: return "c_defer";
  }
  return "agents";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  for (auto a : {SweepAxis::Agents, SweepAxis::Rounds, SweepAxis::CDefer}) {
    if (to_string(a) == text) return a;
  }
  throw std::invalid_argument("unknown sweep axis: " + std::string(text));
}

namespace {

int as_count(double value, const char* what) {
  if (!(value >= 1.0) || std::floor(value) != value) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer, got " + num(value));
  }
  return static_cast<int>(value);
}

SweepRow run_cell(SweepAxis axis, double value, std::uint64_t seed, std::span<const TaskInstance> tasks,
                  const SweepBase& base) {
  SweepRow row;
  row.axis = axis;
  row.value = value;
  row.seed = seed;
  try {
    EpisodeConfig ep = base.episode;
    ep.seed = seed;
    std::shared_ptr<const MetaPolicy> policy = base.policy;
    if (axis == SweepAxis::Agents) ep.num_agents = static_cast<std::size_t>(as_count(value, "agent count"));
    if (axis == SweepAxis::Rounds) ep.num_rounds = as_count(value, "round count");
    if (axis == SweepAxis::CDefer) {
      PolicyTrainingConfig tc = base.training;
      tc.episode = ep;
      tc.reward.c_defer = value;
      tc.reward.validate();
      tc.trainer.seed = seed;
      Backends b = make_synthetic_backends(base.setup, ep.num_agents);
      policy = std::make_shared<ParametricPolicy>(train_policy(tasks, tc, b.agents, *b.expert, PolicyParams{}).params);
      ep.seed = derive_seed(seed, {0xE7A1});
    }
    if (!policy) policy = std::make_shared<ParametricPolicy>(PolicyParams{});
    Backends b = make_synthetic_backends(base.setup, ep.num_agents);
    const auto episodes = run_episodes(tasks, ep, b.agents, *b.expert, *policy);
    RunSummary s = summarize(episodes);
    row.accuracy = s.accuracy;
    row.distribution = s.distribution;
    row.tokens_in = static_cast<double>(s.tokens.input);
    row.tokens_out = static_cast<double>(s.tokens.output);
    row.tokens_total = static_cast<double>(s.tokens.total());
    row.summary = std::move(s);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

// Sorted before summing so the mean does not depend on seed order.
double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

SweepRow mean_row(SweepAxis axis, double value, std::span<const SweepRow> cells) {
  SweepRow m;
  m.axis = axis;
  m.value = value;
  std::vector<double> acc, tin, tout, ttot;
  std::array<std::vector<double>, kNumActionTypes> dist;
  bool all_dist = true;
  for (const auto& c : cells) {
    if (c.error) continue;
    acc.push_back(c.accuracy);
    tin.push_back(c.tokens_in);
    tout.push_back(c.tokens_out);
    ttot.push_back(c.tokens_total);
    if (c.distribution) {
      for (std::size_t k = 0; k < kNumActionTypes; ++k) dist[k].push_back((*c.distribution)[k]);
    } else {
      all_dist = false;
    }
  }
  if (acc.empty()) {
    m.error = "every seed failed";
    return m;
  }
  m.accuracy = sorted_mean(acc);
  m.tokens_in = sorted_mean(tin);
  m.tokens_out = sorted_mean(tout);
  m.tokens_total = sorted_mean(ttot);
  if (all_dist) m.distribution = ActionProbs{sorted_mean(dist[0]), sorted_mean(dist[1]), sorted_mean(dist[2])};
  return m;
}

}  // namespace

std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values, std::span<const std::uint64_t> seeds,
                            std::span<const TaskInstance> tasks, const SweepBase& base) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (tasks.empty()) throw std::invalid_argument("sweep needs at least one task");

  struct Key {
    double value;
    std::uint64_t seed;
  };
  std::vector<Key> keys;
  for (double v : values) {
    for (auto s : seeds) keys.push_back({v, s});
  }
  std::vector<SweepRow> cells(keys.size());
  const std::size_t width = std::max<std::size_t>(1, base.parallelism);
  for (std::size_t start = 0; start < keys.size(); start += width) {
    const std::size_t end = std::min(keys.size(), start + width);
    if (width == 1) {
      cells[start] = run_cell(axis, keys[start].value, keys[start].seed, tasks, base);
      continue;
    }
    std::vector<std::future<SweepRow>> futs;
    for (std::size_t i = start; i < end; ++i) {
      futs.push_back(std::async(std::launch::async, run_cell, axis, keys[i].value, keys[i].seed, tasks, std::cref(base)));
    }
    for (std::size_t i = start; i < end; ++i) cells[i] = futs[i - start].get();
  }

  std::vector<SweepRow> rows;
  for (std::size_t v = 0; v < values.size(); ++v) {
    const std::span<const SweepRow> group(cells.data() + v * seeds.size(), seeds.size());
    rows.insert(rows.end(), group.begin(), group.end());
    rows.push_back(mean_row(axis, values[v], group));
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "axis,value,seed,accuracy,p_eval,p_create,p_defer,tokens_in,tokens_out,tokens_total\n";
  for (const auto& r : rows) {
    out << to_string(r.axis) << "," << num(r.value) << "," << (r.seed ? std::to_string(*r.seed) : "mean") << ",";
    if (r.error) {
      out << ",,,,,,\n";
      continue;
    }
    out << num(r.accuracy) << "," << dist_cols(r.distribution) << "," << num(r.tokens_in) << "," << num(r.tokens_out)
        << "," << num(r.tokens_total) << "\n";
  }
}

}  // namespace hila
