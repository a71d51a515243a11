#include "hila/training.hpp"

#include <cmath>
#include <map>

#include "hila/metrics.hpp"
#include "hila/rng.hpp"

namespace hila {

Backends make_synthetic_backends(const SyntheticSetup& setup, std::size_t num_agents) {
  Backends b;
  for (std::size_t i = 0; i < num_agents; ++i) {
    b.owned.push_back(std::make_unique<SyntheticAgent>(setup.agent));
    b.agents.push_back(b.owned.back().get());
  }
  if (setup.expert == "oracle") {
    b.expert = std::make_unique<OracleExpert>(setup.expert_verbosity);
  } else if (setup.expert == "noisy") {
    b.expert = std::make_unique<NoisyExpert>(setup.expert_reliability, setup.expert_verbosity);
  } else {
    throw std::invalid_argument("synthetic runs support the oracle and noisy experts, not " + setup.expert);
  }
  return b;
}

std::vector<TaskInstance> synthetic_suite(std::size_t count, std::uint64_t seed, const std::string& id_prefix) {
  static const std::vector<std::string> kLetters{"A", "B", "C", "D"};
  std::vector<TaskInstance> tasks;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {i}));
    TaskInstance t;
    t.id = id_prefix + "-" + std::to_string(i);
    // Three decimals keep the value stable through a JSON round trip.
    t.difficulty = static_cast<double>(rng.below(1000)) / 1000.0;
    const std::uint64_t a = 10 + rng.below(90), b = 10 + rng.below(90);
    switch (i % 3) {
      case 0:
        t.kind = TaskKind::MathNumeric;
        t.prompt = "What is " + std::to_string(a) + " + " + std::to_string(b) + "?";
        t.gold = std::to_string(a + b);
        break;
      case 1:
        t.kind = TaskKind::MultipleChoice;
        t.choices = kLetters;
        t.gold = kLetters[rng.below(kLetters.size())];
        t.prompt = "Which option is correct for item " + std::to_string(i) + "?\nA) first\nB) second\nC) third\nD) fourth";
        break;
      default:
        t.kind = TaskKind::MathBoxed;
        t.prompt = "Compute " + std::to_string(a) + " * " + std::to_string(b) + ".";
        t.gold = std::to_string(a * b);
        break;
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<EpisodeResult> run_episodes(std::span<const TaskInstance> tasks, const EpisodeConfig& config,
                                        std::span<AgentBackend* const> agents, ExpertBackend& expert,
                                        const MetaPolicy& policy, const EpisodeHooks& hooks) {
  std::vector<EpisodeResult> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks) {
    EpisodeConfig c = config;
    c.seed = episode_seed(config.seed, task.id);
    out.push_back(run_episode(task, c, agents, expert, policy, hooks));
  }
  return out;
}

Collection collect_groups(std::span<const TaskInstance> tasks, const CollectOptions& options,
                          std::span<AgentBackend* const> agents, ExpertBackend& expert, const MetaPolicy& policy) {
  options.reward.validate();
  Collection col;
  EpisodeHooks hooks;
  hooks.on_decision = [&](const DecisionPoint& dp) {
    GroupSample g;
    g.features = dp.features;
    g.task_id = dp.task.id;
    g.round = dp.round;
    const ActionProbs behavior = dp.behavior_probs.value_or(ActionProbs{1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      const ActionType a = kAllActionTypes[k];
      const RolloutOutcome o = dp.rollout(a);
      if (!o.correct) throw std::invalid_argument("task " + dp.task.id + " has no gold answer; cannot score rollouts");
      g.actions[k] = a;
      g.rewards[k] = compute_reward(a, *o.correct, options.reward);
      g.behavior_probs[k] = behavior[static_cast<std::size_t>(a)];
      if (a == ActionType::Defer && options.keep_demo_tokens) g.defer_demo_tokens = whitespace_tokens(o.text);
    }
    g.set_advantages(options.normalize_advantages);
    col.groups.push_back(std::move(g));
  };
  if (options.demos) {
    hooks.on_defer = [&](const DeferEvent& e) { record_demonstration(*options.demos, e); };
  }
  col.episodes = run_episodes(tasks, options.episode, agents, expert, policy, hooks);
  return col;
}

PolicyTrainingResult train_policy(std::span<const TaskInstance> tasks, const PolicyTrainingConfig& config,
                                  std::span<AgentBackend* const> agents, ExpertBackend& expert,
                                  const PolicyParams& initial, DemonstrationStore* demos,
                                  std::span<const FeatureVector> probes) {
  if (config.iterations < 1) throw std::invalid_argument("training needs at least one iteration");
  if (config.episode.num_rounds < 2) throw std::invalid_argument("training needs at least 2 rounds per episode");
  PolicyTrainingResult result;
  result.params = initial;
  int epoch_offset = 0;
  for (int it = 0; it < config.iterations; ++it) {
    CollectOptions opt;
    opt.episode = config.episode;
    opt.episode.seed = derive_seed(config.episode.seed, {static_cast<std::uint64_t>(it)});
    opt.reward = config.reward;
    opt.normalize_advantages = config.trainer.normalize_advantages;
    opt.demos = demos;
    const ParametricPolicy behavior(result.params);
    Collection col = collect_groups(tasks, opt, agents, expert, behavior);
    if (col.groups.empty()) throw std::invalid_argument("no decision states collected");

    TrainerConfig tc = config.trainer;
    tc.seed = derive_seed(config.trainer.seed, {static_cast<std::uint64_t>(it)});
    TrainResult tr = train(result.params, col.groups, tc, probes, &initial);
    for (auto t : tr.telemetry) {
      t.epoch += epoch_offset;
      result.telemetry.push_back(t);
    }
    epoch_offset += tc.epochs;
    result.steps += tr.steps;
    result.groups_collected += col.groups.size();
    result.params = tr.params;
    result.last_groups = std::move(col.groups);
  }
  return result;
}

std::vector<FeatureVector> probe_states(std::span<const TaskInstance> tasks, const EpisodeConfig& config,
                                        std::span<AgentBackend* const> agents, ExpertBackend& expert) {
  std::vector<FeatureVector> out;
  EpisodeHooks hooks;
  hooks.on_decision = [&](const DecisionPoint& dp) { out.push_back(dp.features); };
  run_episodes(tasks, config, agents, expert, ParametricPolicy(PolicyParams{}), hooks);
  return out;
}

namespace {

StageMetrics evaluate(std::span<const TaskInstance> tasks, const EpisodeConfig& config, const PolicyParams& params,
                      const SyntheticSetup& setup) {
  Backends b = make_synthetic_backends(setup, config.num_agents);
  const auto episodes = run_episodes(tasks, config, b.agents, *b.expert, ParametricPolicy(params));
  const RunSummary s = summarize(episodes);
  return {s.distribution ? (*s.distribution)[2] : 0.0, s.accuracy};
}

}  // namespace

DualLoopReport run_dual_loop(std::span<const TaskInstance> train_tasks, std::span<const TaskInstance> eval_tasks,
                             const DualLoopConfig& config) {
  DualLoopReport report;
  report.competence.eta = config.eta;
  report.competence.validate();

  EpisodeConfig eval_config = config.training.episode;
  eval_config.seed = derive_seed(config.training.episode.seed, {0xE7A1});

  DemonstrationStore store;
  {
    Backends b = make_synthetic_backends(config.setup, config.training.episode.num_agents);
    report.pre_params = train_policy(train_tasks, config.training, b.agents, *b.expert, PolicyParams{}, &store).params;
  }
  report.pre = evaluate(eval_tasks, eval_config, report.pre_params, config.setup);

  std::map<std::string, const TaskInstance*> by_id;
  for (const auto& t : train_tasks) by_id[t.id] = &t;
  const auto demos = store.snapshot();
  report.demonstrations = demos.size();
  for (const auto& d : demos) {
    auto it = by_id.find(d.task_id);
    if (it == by_id.end()) continue;
    if (assimilate(report.competence, d, *it->second, config.setup.agent.competence_for(*it->second))) {
      ++report.assimilated;
    }
  }

  SyntheticSetup grown = config.setup;
  grown.agent = apply_competence(config.setup.agent, report.competence);
  PolicyTrainingConfig retrain = config.training;
  retrain.episode.seed = derive_seed(config.training.episode.seed, {0x2E72});
  {
    Backends b = make_synthetic_backends(grown, retrain.episode.num_agents);
    report.post_params = train_policy(train_tasks, retrain, b.agents, *b.expert, report.pre_params).params;
  }
  report.post = evaluate(eval_tasks, eval_config, report.post_params, grown);
  return report;
}

}  // namespace hila
