#include "hila/collaboration.hpp"

#include <future>
#include <stdexcept>

#include "hila/prompts.hpp"
#include "hila/rng.hpp"

namespace hila {

namespace {

enum StreamTag : std::uint64_t { kGenerateStream = 1, kPolicyStream = 2, kExpertStream = 3 };

// Rounds of history kept in the task context, newest last.
constexpr std::size_t kHistoryRounds = 2;

std::string answer_or_none(const std::optional<std::string>& a) { return a ? *a : std::string("(no answer)"); }

Generation call_agent(AgentBackend& agent, const GenerationRequest& request, int attempts) {
  for (int i = 0; i < std::max(1, attempts); ++i) {
    try {
      return agent.generate(request);
    } catch (const std::exception&) {
      // retried below; after the last attempt the turn is recorded empty
    }
  }
  return {};
}

std::vector<double> majority_history(std::span<const RoundRecord> transcript) {
  std::vector<double> out;
  for (const auto& r : transcript) {
    const auto answers = r.answers();
    out.push_back(extract_social(answers, 0).values[2]);
  }
  return out;
}

bool expert_used_before(std::span<const RoundRecord> transcript) {
  for (const auto& r : transcript) {
    for (const auto& a : r.agents) {
      if (a.action && a.action->type() == ActionType::Defer) return true;
    }
  }
  return false;
}

std::string peers_block(std::span<const RoundRecord> transcript, std::size_t agent) {
  const auto& latest = transcript.back();
  std::string out;
  for (std::size_t j = 0; j < latest.agents.size(); ++j) {
    if (j == agent) continue;
    if (!out.empty()) out += "\n\n";
    out += "Agent " + std::to_string(j) + ":\n" + latest.agents[j].raw_output;
  }
  return out.empty() ? std::string("(none)") : out;
}

}  // namespace

std::string_view to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::Parametric: return "parametric";
    case PolicyMode::LlmPrompted: return "llm-prompted";
    case PolicyMode::Scripted: return "scripted";
  }
  return "parametric";
}

PolicyMode parse_policy_mode(std::string_view text) {
  for (auto m : {PolicyMode::Parametric, PolicyMode::LlmPrompted, PolicyMode::Scripted}) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown policy mode: " + std::string(text));
}

void EpisodeConfig::validate() const {
  if (num_agents < 1) throw std::invalid_argument("episode needs at least one agent");
  if (num_rounds < 1) throw std::invalid_argument("episode needs at least one round");
}

std::uint64_t episode_seed(std::uint64_t master_seed, const std::string& task_id) {
  return derive_seed(master_seed, {hash_string(task_id)});
}

std::string initial_prompt(const TaskInstance& task, const std::optional<Guidance>& guidance) {
  std::string base = render_base_prompt(task);
  if (!guidance) return base;
  const std::string header =
      guidance->level == ExpertLevel::Idea ? "=== Human Idea ===\n" : "=== Human Reasoning ===\n";
  return header + guidance->text + "\n\n" + base;
}

CognitiveState build_state(const TaskInstance& task, std::span<const RoundRecord> transcript, std::size_t agent,
                           int round, const EpisodeConfig& config) {
  if (round < 1) throw std::invalid_argument("build_state: strategic actions start at round 1");
  if (transcript.empty()) throw std::invalid_argument("build_state: empty transcript");
  const RoundRecord& latest = transcript.back();
  if (agent >= latest.agents.size()) throw std::out_of_range("build_state: agent index out of range");

  CognitiveState s;
  s.task_context = initial_prompt(task, config.guidance);
  const std::size_t first = transcript.size() > kHistoryRounds ? transcript.size() - kHistoryRounds : 0;
  for (std::size_t r = first; r < transcript.size(); ++r) {
    s.task_context += "\n\n=== Round " + std::to_string(transcript[r].round_index) + " ===";
    for (std::size_t j = 0; j < transcript[r].agents.size(); ++j) {
      s.task_context += "\nAgent " + std::to_string(j) + ": " + answer_or_none(transcript[r].agents[j].normalized_answer);
    }
  }

  s.self_context = latest.agents[agent].raw_output;
  for (std::size_t j = 0; j < latest.agents.size(); ++j) {
    if (j != agent) s.peer_contexts.push_back(latest.agents[j].raw_output);
  }

  const auto answers = latest.answers();
  s.social = extract_social(answers, agent);

  std::vector<std::optional<std::string>> previous;
  for (std::size_t r = 0; r + 1 < transcript.size(); ++r) previous.push_back(transcript[r].agents[agent].normalized_answer);
  s.monitoring = extract_monitoring(latest.agents[agent].raw_output, task.kind, previous, config.cues);

  const auto strengths = majority_history(transcript);
  s.control = extract_control(round, config.num_rounds, strengths, expert_used_before(transcript));
  return s;
}

std::string render_meta_policy_prompt(const TaskInstance& task, const CognitiveState& state,
                                      std::span<const RoundRecord> transcript, std::size_t agent,
                                      const EpisodeConfig& config) {
  return render_prompt(TemplateId::MetaPolicy,
                       {{"structured_decision_signals", render_decision_signals(state.social, state.monitoring, state.control)},
                        {"base_prompt", initial_prompt(task, config.guidance)},
                        {"self_latest_solution", state.self_context},
                        {"others_latest_solutions", peers_block(transcript, agent)}});
}

std::string render_collaboration_prompt(const TaskInstance& task, std::span<const RoundRecord> transcript,
                                        std::size_t agent, const EpisodeConfig& config) {
  std::string self_history;
  const std::size_t first = transcript.size() > kHistoryRounds ? transcript.size() - kHistoryRounds : 0;
  for (std::size_t r = first; r < transcript.size(); ++r) {
    if (!self_history.empty()) self_history += "\n\n";
    self_history += "Round " + std::to_string(transcript[r].round_index) + ":\n" + transcript[r].agents[agent].raw_output;
  }
  return render_prompt(TemplateId::Collaboration, {{"base_prompt", initial_prompt(task, config.guidance)},
                                                   {"self_history_block", self_history.empty() ? "(none)" : self_history},
                                                   {"others_history_block", peers_block(transcript, agent)}});
}

EpisodeResult run_episode(const TaskInstance& task, const EpisodeConfig& config, std::span<AgentBackend* const> agents,
                          ExpertBackend& expert, const MetaPolicy& policy, const EpisodeHooks& hooks) {
  config.validate();
  const std::size_t n = config.num_agents;
  if (agents.size() != n) throw std::invalid_argument("run_episode: expected one backend per agent");

  EpisodeResult result;
  result.task_id = task.id;
  result.seed = config.seed;
  const std::string base = initial_prompt(task, config.guidance);

  auto judge = [&](const std::optional<std::string>& answer) -> std::optional<bool> {
    if (!task.gold) return std::nullopt;
    return answer && *answer == *task.gold;
  };
  auto make_turn = [&](std::optional<StrategicAction> action, std::string text, OutputSource source, TokenCounts tokens) {
    AgentTurn t;
    t.action = action;
    t.normalized_answer = normalize_answer(text, task.kind);
    t.raw_output = std::move(text);
    t.source = source;
    t.tokens = tokens;
    return t;
  };

  // Round 0: independent initial solutions.
  {
    RoundRecord r0;
    r0.round_index = 0;
    std::vector<Generation> gens(n);
    auto gen = [&](std::size_t i) {
      GenerationRequest req{task, i, 0, GenerationPurpose::Initial, base, derive_seed(config.seed, {i, 0, kGenerateStream})};
      return call_agent(*agents[i], req, config.agent_attempts);
    };
    if (config.parallel && n > 1) {
      std::vector<std::future<Generation>> futs;
      for (std::size_t i = 0; i < n; ++i) futs.push_back(std::async(std::launch::async, gen, i));
      for (std::size_t i = 0; i < n; ++i) gens[i] = futs[i].get();
    } else {
      for (std::size_t i = 0; i < n; ++i) gens[i] = gen(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      r0.agents.push_back(make_turn(std::nullopt, std::move(gens[i].text), OutputSource::SelfGenerated, gens[i].tokens));
    }
    result.rounds.push_back(std::move(r0));
  }

  for (int t = 1; t < config.num_rounds; ++t) {
    const std::span<const RoundRecord> transcript(result.rounds);
    const RoundRecord& prev = result.rounds.back();
    const auto answers = prev.answers();
    const auto tu = static_cast<std::uint64_t>(t);

    // Decide. Every agent reads only the previous round.
    std::vector<CognitiveState> states(n);
    std::vector<Decision> decisions(n);
    for (std::size_t i = 0; i < n; ++i) {
      states[i] = build_state(task, transcript, i, t, config);
      const std::string prompt = render_meta_policy_prompt(task, states[i], transcript, i, config);
      DecisionContext ctx{task, states[i], i, t, n, answers, prompt, derive_seed(config.seed, {i, tu, kPolicyStream})};
      decisions[i] = policy.decide(ctx);
      if (decisions[i].action.type() == ActionType::Eval && decisions[i].action.target() >= n) {
        throw std::logic_error("policy chose EVAL with an out-of-range target");
      }
    }

    // Lazily computed outcomes, shared by execution and counterfactual rollouts.
    std::vector<std::optional<Generation>> created(n);
    std::optional<ExpertReply> expert_reply;
    std::string expert_snapshot;
    auto create_for = [&](std::size_t i) -> const Generation& {
      if (!created[i]) {
        const std::string prompt = render_collaboration_prompt(task, transcript, i, config);
        GenerationRequest req{task, i, t, GenerationPurpose::Create, prompt, derive_seed(config.seed, {i, tu, kGenerateStream})};
        created[i] = call_agent(*agents[i], req, config.agent_attempts);
      }
      return *created[i];
    };
    const std::string summary = summarize_candidates(answers);
    auto expert_for = [&](std::size_t trigger) -> const ExpertReply& {
      if (!expert_reply) {
        ExpertRequest req{task, t, trigger, base, summary, config.defer_level, derive_seed(config.seed, {tu, kExpertStream})};
        expert_snapshot = RemoteProxyExpert::render_request(req);
        expert_reply = expert.respond(req);
      }
      return *expert_reply;
    };

    if (hooks.on_decision) {
      for (std::size_t i = 0; i < n; ++i) {
        DecisionPoint dp{task, i, t, states[i].features(), std::nullopt, decisions[i].action, {}};
        DecisionContext ctx{task, states[i], i, t, n, answers, base, 0};
        dp.behavior_probs = policy.probabilities(ctx);
        dp.rollout = [&, i](ActionType a) {
          std::string text;
          switch (a) {
            case ActionType::Eval: text = prev.agents[eval_target_for(i, answers)].raw_output; break;
            case ActionType::Create: text = create_for(i).text; break;
            case ActionType::Defer: text = expert_for(i).text; break;
          }
          RolloutOutcome o;
          o.answer = normalize_answer(text, task.kind);
          o.correct = judge(o.answer);
          o.text = std::move(text);
          return o;
        };
        hooks.on_decision(dp);
      }
    }

    // Execute: one shared expert call for the round, then the regenerations.
    std::vector<std::size_t> deferring;
    for (std::size_t i = 0; i < n; ++i) {
      if (decisions[i].action.type() == ActionType::Defer) deferring.push_back(i);
    }
    if (!deferring.empty()) {
      const ExpertReply& reply = expert_for(deferring.front());
      ++result.expert_calls;
      result.expert_tokens += reply.tokens;
      if (hooks.on_defer) {
        hooks.on_defer(DeferEvent{task, t, deferring.front(), deferring, expert_snapshot, reply, expert.kind(), config.seed});
      }
    }
    if (config.parallel) {
      std::vector<std::future<void>> futs;
      for (std::size_t i = 0; i < n; ++i) {
        if (decisions[i].action.type() == ActionType::Create && !created[i]) {
          // Each task writes only created[i].
          futs.push_back(std::async(std::launch::async, [&, i] { create_for(i); }));
        }
      }
      for (auto& f : futs) f.get();
    }

    RoundRecord rec;
    rec.round_index = t;
    for (std::size_t i = 0; i < n; ++i) {
      const StrategicAction action = decisions[i].action;
      TokenCounts tokens = decisions[i].tokens;
      switch (action.type()) {
        case ActionType::Eval:
          rec.agents.push_back(make_turn(action, prev.agents[action.target()].raw_output, OutputSource::CopiedFromPeer, tokens));
          break;
        case ActionType::Create: {
          const Generation& g = create_for(i);
          tokens += g.tokens;
          rec.agents.push_back(make_turn(action, g.text, OutputSource::SelfGenerated, tokens));
          break;
        }
        case ActionType::Defer:
          rec.agents.push_back(make_turn(action, expert_reply->text, OutputSource::Expert, tokens));
          break;
      }
      result.actions.add(action.type());
    }
    result.rounds.push_back(std::move(rec));
  }

  for (const auto& r : result.rounds) {
    for (const auto& a : r.agents) result.tokens += a.tokens;
  }
  result.final_answer = aggregate_final(result.rounds.back());
  if (task.gold) result.correct = result.final_answer == *task.gold;
  return result;
}

}  // namespace hila
