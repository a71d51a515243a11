// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hila/backends.hpp"
#include "hila/cli.hpp"
#include "hila/collaboration.hpp"
#include "hila/json_io.hpp"
#include "hila/meta_policy.hpp"
#include "hila/metrics.hpp"
#include "hila/outer_loop.hpp"
#include "hila/prompts.hpp"
#include "hila/reward_grpo.hpp"
#include "hila/rng.hpp"
#include "hila/training.hpp"

using namespace hila;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kFdStep = 1e-6;
constexpr double kFdRelTol = 1e-5;
constexpr int kFdDraws = 100;
constexpr double kFdBudgetS = 10.0;
constexpr double kCenterTol = 1e-12;
constexpr int kCenterDraws = 1000;
constexpr double kDeferHigh = 0.9;
constexpr double kDeferLow = 0.1;
constexpr std::size_t kMaxSteps = 2000;
constexpr double kConvergenceBudgetS = 120.0;
constexpr double kSweepBudgetS = 300.0;
constexpr double kSftTol = 1e-12;
constexpr std::size_t kMinParserCases = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// Gradient correctness
// ---------------------------------------------------------------------------

struct Draw {
  PolicyParams params;
  PolicyParams reference;
  std::vector<GroupSample> batch;
};

Draw random_draw(Rng& rng) {
  auto normal = [&] {
    // Box-Muller from the portable uniform stream.
    const double u1 = std::max(rng.uniform(), 1e-300), u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  Draw d;
  const double temp = 0.5 + 1.5 * rng.uniform();
  for (auto* p : {&d.params, &d.reference}) {
    for (double& w : p->weights) w = normal();
    for (double& b : p->biases) b = normal();
    p->temperature = temp;
  }
  const std::size_t n = 1 + rng.below(8);
  for (std::size_t i = 0; i < n; ++i) {
    GroupSample s;
    for (double& f : s.features) f = rng.uniform();
    for (double& r : s.rewards) r = rng.uniform() * 1.2 - 0.2;
    ActionProbs logits{normal(), normal(), normal()};
    const auto old = softmax(logits);
    // Behavior probs near the current policy so some ratios sit inside the clip range.
    const auto cur = action_distribution(d.params, s.features).probs;
    const bool near = rng.bernoulli(0.5);
    for (std::size_t k = 0; k < 3; ++k) s.behavior_probs[k] = near ? cur[k] * (0.9 + 0.2 * rng.uniform()) : old[k];
    s.set_advantages(rng.bernoulli(0.5));
    s.task_id = "fd";
    std::vector<std::string> demo;
    for (std::size_t t = 0, L = 1 + rng.below(5); t < L; ++t) demo.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
    s.defer_demo_tokens = demo;
    d.batch.push_back(std::move(s));
  }
  return d;
}

double rel_err(std::span<const double> a, std::span<const double> fd) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - fd[i]) * (a[i] - fd[i]);
    den += fd[i] * fd[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

Outcome check_gradients() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2024, {1}));
  double worst = 0.0;
  std::string worst_term;
  const std::vector<std::string> vocab{"a", "b", "c", "d"};

  for (int draw = 0; draw < kFdDraws; ++draw) {
    Draw d = random_draw(rng);
    const double tau = d.params.temperature;

    struct Term {
      std::string name;
      TrainerConfig config;
      bool zero_adv;
    };
    std::vector<Term> terms;
    for (auto mode : {Surrogate::Reinforce, Surrogate::Clip}) {
      TrainerConfig c;
      c.surrogate = mode;
      c.beta_kl = 0.0;
      c.beta_ent = 0.0;
      terms.push_back({std::string("L_PG/") + std::string(to_string(mode)), c, false});
      c.beta_kl = 0.7;
      c.beta_ent = 0.3;
      terms.push_back({std::string("L_Inner/") + std::string(to_string(mode)), c, false});
    }
    TrainerConfig kl;
    kl.beta_kl = 1.0;
    kl.beta_ent = 0.0;
    terms.push_back({"L_KL", kl, true});
    TrainerConfig ent;
    ent.beta_kl = 0.0;
    ent.beta_ent = 1.0;
    terms.push_back({"L_Entropy", ent, true});

    for (const auto& term : terms) {
      std::vector<GroupSample> batch = d.batch;
      if (term.zero_adv) {
        for (auto& s : batch) s.advantages = {};
      }
      const auto analytic = inner_loss_and_grad(d.params, d.reference, batch, term.config).grad;
      PolicyParams::Vector fd{};
      const auto theta = d.params.flatten();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        auto plus = theta, minus = theta;
        plus[i] += kFdStep;
        minus[i] -= kFdStep;
        const double lp = inner_loss_and_grad(PolicyParams::unflatten(plus, tau), d.reference, batch, term.config).loss.inner;
        const double lm = inner_loss_and_grad(PolicyParams::unflatten(minus, tau), d.reference, batch, term.config).loss.inner;
        fd[i] = (lp - lm) / (2 * kFdStep);
      }
      const double e = rel_err(analytic, fd);
      if (e > worst) {
        worst = e;
        worst_term = term.name;
      }
    }

    // Full objective: policy parameters and token-model logits together.
    TrainerConfig tc;
    tc.beta_ent = 0.1;
    tc.surrogate = draw % 2 ? Surrogate::Clip : Surrogate::Reinforce;
    std::vector<double> logits(vocab.size());
    for (double& l : logits) l = rng.uniform() * 2 - 1;
    const CategoricalTokenModel model(vocab, logits);
    const double lambda = 0.5;
    const auto joint = joint_loss_and_grad(d.params, d.reference, d.batch, tc, model, lambda);
    std::vector<double> analytic(joint.policy_grad.begin(), joint.policy_grad.end());
    analytic.insert(analytic.end(), joint.token_grad.begin(), joint.token_grad.end());
    std::vector<double> fd;
    const auto theta = d.params.flatten();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      auto plus = theta, minus = theta;
      plus[i] += kFdStep;
      minus[i] -= kFdStep;
      const double lp = joint_loss_and_grad(PolicyParams::unflatten(plus, tau), d.reference, d.batch, tc, model, lambda).total;
      const double lm = joint_loss_and_grad(PolicyParams::unflatten(minus, tau), d.reference, d.batch, tc, model, lambda).total;
      fd.push_back((lp - lm) / (2 * kFdStep));
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto lp = logits, lm = logits;
      lp[i] += kFdStep;
      lm[i] -= kFdStep;
      const double a = joint_loss_and_grad(d.params, d.reference, d.batch, tc, CategoricalTokenModel(vocab, lp), lambda).total;
      const double b = joint_loss_and_grad(d.params, d.reference, d.batch, tc, CategoricalTokenModel(vocab, lm), lambda).total;
      fd.push_back((a - b) / (2 * kFdStep));
    }
    const double e = rel_err(analytic, fd);
    if (e > worst) {
      worst = e;
      worst_term = "L_total";
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst < kFdRelTol && elapsed < kFdBudgetS;
  o.detail = fmt("worst relative error %.3g", worst) + " (" + worst_term + ") over " + std::to_string(kFdDraws) +
             " draws, " + fmt("%.2fs", elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// Advantage centering
// ---------------------------------------------------------------------------

Outcome check_centering() {
  Rng rng(derive_seed(2024, {2}));
  double worst_sum = 0.0;
  for (int i = 0; i < kCenterDraws; ++i) {
    std::vector<double> r(2 + rng.below(7));
    for (double& x : r) x = rng.uniform() * 2.0 - 1.0;
    const auto a = compute_advantages(r, false);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(a.begin(), a.end(), 0.0)));
  }
  // Equal rewards: the policy-gradient term must vanish exactly in both modes.
  double worst_grad = 0.0;
  for (int i = 0; i < 200; ++i) {
    Draw d = random_draw(rng);
    for (auto& s : d.batch) {
      const double r = rng.uniform();
      s.rewards = {r, r, r};
      s.set_advantages(i % 2 == 0);
    }
    for (auto mode : {Surrogate::Reinforce, Surrogate::Clip}) {
      TrainerConfig c;
      c.surrogate = mode;
      c.beta_kl = 0.0;
      c.beta_ent = 0.0;
      for (double g : inner_loss_and_grad(d.params, d.reference, d.batch, c).grad) {
        worst_grad = std::max(worst_grad, std::abs(g));
      }
    }
  }
  Outcome o;
  o.pass = worst_sum <= kCenterTol && worst_grad == 0.0;
  o.detail = fmt("max |sum A| %.3g", worst_sum) + " over " + std::to_string(kCenterDraws) +
             fmt(" vectors; max |grad| on equal-reward groups %.3g", worst_grad);
  return o;
}

// ---------------------------------------------------------------------------
// Convergence toward the expected-reward argmax
// ---------------------------------------------------------------------------

struct ProbeSet {
  std::vector<FeatureVector> defer_best;
  std::vector<FeatureVector> all;
};

// Expected reward of each action conditioned on what the policy observes.
// Probe states sharing a feature vector are pooled: Eval and Defer outcomes
// are exact per state (deterministic plurality copy, oracle expert) and
// Create is averaged over fresh synthetic generations.
ProbeSet oracle_probes(std::span<const TaskInstance> tasks, const SyntheticSetup& setup, const EpisodeConfig& ep,
                       const RewardConfig& reward, const PolicyParams& rollout_policy, int only_round) {
  struct Pool {
    std::array<double, kNumActionTypes> sum{};
    std::size_t count = 0;
  };
  std::map<FeatureVector, Pool> pools;
  ProbeSet probes;
  Backends b = make_synthetic_backends(setup, ep.num_agents);
  EpisodeHooks hooks;
  hooks.on_decision = [&](const DecisionPoint& dp) {
    if (only_round >= 0 && dp.round != only_round) return;
    Pool& pool = pools[dp.features];
    pool.sum[0] += compute_reward(ActionType::Eval, *dp.rollout(ActionType::Eval).correct, reward);
    pool.sum[2] += compute_reward(ActionType::Defer, *dp.rollout(ActionType::Defer).correct, reward);
    constexpr int kSamples = 400;
    double create = 0.0;
    for (int s = 0; s < kSamples; ++s) {
      const Generation g = synthetic_generate(
          setup.agent, dp.task,
          derive_seed(0xC0FFEE, {dp.agent, static_cast<std::uint64_t>(dp.round), static_cast<std::uint64_t>(s)}));
      const auto ans = normalize_answer(g.text, dp.task.kind);
      create += compute_reward(ActionType::Create, ans && *ans == *dp.task.gold, reward);
    }
    pool.sum[1] += create / kSamples;
    ++pool.count;
    probes.all.push_back(dp.features);
  };
  run_episodes(tasks, ep, b.agents, *b.expert, ParametricPolicy(rollout_policy), hooks);
  for (const auto& f : probes.all) {
    const auto& s = pools.at(f).sum;
    if (s[2] > s[0] && s[2] > s[1]) probes.defer_best.push_back(f);
  }
  return probes;
}

PolicyTrainingConfig convergence_training(double c_defer, double c_create, std::uint64_t seed) {
  PolicyTrainingConfig pc;
  pc.episode.seed = seed;
  pc.reward = {c_create, c_defer, 1.0};
  pc.trainer.seed = seed;
  pc.trainer.learning_rate = 0.1;
  pc.trainer.epochs = 20;
  pc.trainer.batch_size = 64;
  pc.iterations = 15;
  return pc;
}

Outcome check_convergence() {
  const auto t0 = Clock::now();
  const auto train_tasks = synthetic_suite(60, 11, "train");
  const auto probe_tasks = synthetic_suite(30, 12, "probe");
  std::string detail;
  bool pass = true;
  std::size_t max_steps = 0;

  {  // Low competence, cheap deferral: Defer should win.
    SyntheticSetup setup;
    setup.agent.competence = {0.3};
    setup.expert = "oracle";
    const auto pc = convergence_training(0.2, 0.1, 5);
    Backends b = make_synthetic_backends(setup, pc.episode.num_agents);
    const auto r = train_policy(train_tasks, pc, b.agents, *b.expert, PolicyParams{});
    max_steps = std::max(max_steps, r.steps);
    EpisodeConfig probe_ep = pc.episode;
    probe_ep.seed = 99;
    // On-policy probes: expected rewards under the state distribution the
    // trained policy itself induces. First-decision probes do not depend on
    // any earlier choice. The uniform-rollout figure is informational.
    const ProbeSet on_policy = oracle_probes(probe_tasks, setup, probe_ep, pc.reward, r.params, -1);
    const ProbeSet first = oracle_probes(probe_tasks, setup, probe_ep, pc.reward, PolicyParams{}, 1);
    const ProbeSet uniform = oracle_probes(probe_tasks, setup, probe_ep, pc.reward, PolicyParams{}, -1);
    auto share = [](const ProbeSet& p) {
      return static_cast<double>(p.defer_best.size()) / static_cast<double>(std::max<std::size_t>(p.all.size(), 1));
    };
    const double p_on = mean_distribution(r.params, on_policy.defer_best)[2];
    const double p_first = mean_distribution(r.params, first.defer_best)[2];
    const double p_uniform = mean_distribution(r.params, uniform.defer_best)[2];
    pass = pass && !on_policy.defer_best.empty() && !first.defer_best.empty() && p_on > kDeferHigh &&
           p_first > kDeferHigh;
    detail += fmt("competence 0.3: P(Defer) %.3f on on-policy states where Defer is argmax", p_on) +
              fmt(" (%.0f%% of states), ", 100 * share(on_policy)) + fmt("%.3f on first-decision states", p_first) +
              fmt(" (%.0f%%), ", 100 * share(first)) + fmt("%.3f under uniform rollouts", p_uniform);
  }
  {  // High competence, expensive deferral: Defer should vanish.
    SyntheticSetup setup;
    setup.agent.competence = {0.95};
    setup.expert = "oracle";
    const auto pc = convergence_training(0.5, 0.1, 6);
    Backends b = make_synthetic_backends(setup, pc.episode.num_agents);
    const auto r = train_policy(train_tasks, pc, b.agents, *b.expert, PolicyParams{});
    max_steps = std::max(max_steps, r.steps);
    EpisodeConfig probe_ep = pc.episode;
    probe_ep.seed = 98;
    const ProbeSet probes = oracle_probes(probe_tasks, setup, probe_ep, pc.reward, PolicyParams{}, -1);
    const double p = mean_distribution(r.params, probes.all)[2];
    pass = pass && p < kDeferLow && probes.defer_best.empty();
    detail += fmt("; competence 0.95: P(Defer) %.3g", p);
  }
  const double elapsed = seconds_since(t0);
  pass = pass && max_steps <= kMaxSteps && elapsed < kConvergenceBudgetS;
  detail += "; " + std::to_string(max_steps) + " steps" + fmt(", %.1fs", elapsed);
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Cost knob
// ---------------------------------------------------------------------------

Outcome check_cost_knob() {
  const auto t0 = Clock::now();
  const auto tasks = synthetic_suite(45, 21, "cost");
  SweepBase base;
  base.setup.agent.competence = {0.5};
  base.setup.expert = "oracle";
  base.training = convergence_training(0.2, 0.05, 0);
  base.training.iterations = 6;
  const std::vector<double> values{0.1, 0.3, 0.5};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto rows = sweep(SweepAxis::CDefer, values, seeds, tasks, base);
  std::vector<double> means;
  bool ok = true;
  for (const auto& r : rows) {
    if (r.error) ok = false;
    if (!r.seed) means.push_back(r.distribution ? (*r.distribution)[2] : NAN);
  }
  ok = ok && means.size() == 3 && means[0] >= means[1] && means[1] >= means[2];
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = ok && elapsed < kSweepBudgetS;
  o.detail = "mean P(Defer) at c_defer 0.1/0.3/0.5 = " + fmt("%.3f", means.size() > 0 ? means[0] : NAN) + "/" +
             fmt("%.3f", means.size() > 1 ? means[1] : NAN) + "/" + fmt("%.3f", means.size() > 2 ? means[2] : NAN) +
             fmt(", %.1fs", elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// Dual loop
// ---------------------------------------------------------------------------

Outcome check_dual_loop() {
  const auto t0 = Clock::now();
  const auto train_tasks = synthetic_suite(45, 31, "dl-train");
  const auto eval_tasks = synthetic_suite(45, 32, "dl-eval");
  double pre_defer = 0, post_defer = 0, pre_acc = 0, post_acc = 0;
  constexpr int kSeeds = 5;
  for (int s = 1; s <= kSeeds; ++s) {
    DualLoopConfig c;
    c.setup.agent.competence = {0.4};
    c.setup.expert = "noisy";
    c.setup.expert_reliability = 0.8;
    c.training = convergence_training(0.2, 0.05, static_cast<std::uint64_t>(s));
    c.training.iterations = 6;
    c.eta = 0.05;
    const auto r = run_dual_loop(train_tasks, eval_tasks, c);
    pre_defer += r.pre.p_defer / kSeeds;
    post_defer += r.post.p_defer / kSeeds;
    pre_acc += r.pre.accuracy / kSeeds;
    post_acc += r.post.accuracy / kSeeds;
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = post_defer < pre_defer && post_acc > pre_acc && elapsed < kSweepBudgetS;
  o.detail = fmt("P(Defer) %.3f", pre_defer) + fmt(" -> %.3f", post_defer) + fmt(", accuracy %.3f", pre_acc) +
             fmt(" -> %.3f", post_acc) + fmt(" (5-seed mean), %.1fs", elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

Outcome check_protocol() {
  std::vector<std::string> failures;
  TaskInstance task{"fixture", TaskKind::MathNumeric, "What is 6 * 7?", std::string("42"), {}, std::nullopt};
  ScriptedAgent agents_impl;
  agents_impl.set(0, 0, "I think it is\n41")
      .set(0, 1, "Six sevens\n42")
      .set(0, 2, "Probably\n40")
      .set(1, 1, "Recomputed carefully\n42");
  std::vector<AgentBackend*> agents{&agents_impl, &agents_impl, &agents_impl};
  ScriptedPolicy policy;
  policy.set(1, 0, StrategicAction::eval(1)).set(1, 1, StrategicAction::create()).set(1, 2, StrategicAction::defer());
  OracleExpert expert;
  EpisodeConfig ec;
  ec.num_rounds = 2;
  ec.seed = 3;
  const EpisodeResult r = run_episode(task, ec, agents, expert, policy);
  const auto& r0 = r.rounds.at(0).agents;
  const auto& r1 = r.rounds.at(1).agents;
  std::string expected_expert =
      expert.respond(ExpertRequest{task, 1, 2, "", "", ExpertLevel::Reasoning, 0}).text;
  if (r1[0].raw_output != r0[1].raw_output || r1[0].source != OutputSource::CopiedFromPeer) failures.push_back("eval copy");
  if (r1[1].raw_output != "Recomputed carefully\n42" || r1[1].source != OutputSource::SelfGenerated) failures.push_back("create");
  if (r1[2].raw_output != expected_expert || r1[2].source != OutputSource::Expert) failures.push_back("defer adoption");
  if (r.expert_calls != 1) failures.push_back("expert call count");
  if (r.final_answer != "42") failures.push_back("aggregation");

  // All agents defer in round 1 with the oracle expert.
  const auto suite = synthetic_suite(30, 41, "alldefer");
  SyntheticSetup setup;
  setup.agent.competence = {0.2};
  Backends b = make_synthetic_backends(setup, 3);
  ScriptedPolicy all_defer(StrategicAction::defer());
  EpisodeConfig ad;
  ad.num_rounds = 2;
  ad.seed = 4;
  std::size_t correct = 0, shared = 0;
  for (const auto& e : run_episodes(suite, ad, b.agents, *b.expert, all_defer)) {
    correct += e.correct.value_or(false) ? 1 : 0;
    const auto& a = e.rounds[1].agents;
    if (e.expert_calls == 1 && a[0].raw_output == a[1].raw_output && a[1].raw_output == a[2].raw_output) ++shared;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(suite.size());
  if (acc != 1.0) failures.push_back("all-defer accuracy");
  if (shared != suite.size()) failures.push_back("shared expert output");

  Outcome o;
  o.pass = failures.empty();
  o.detail = fmt("fixture Eval/Create/Defer routing checked; all-Defer accuracy %.3f", acc);
  for (const auto& f : failures) o.detail += "; mismatch: " + f;
  return o;
}

// ---------------------------------------------------------------------------
// Supervised closed forms
// ---------------------------------------------------------------------------

Outcome check_sft_closed_forms() {
  std::vector<std::string> vocab;
  for (int i = 0; i < 10; ++i) vocab.push_back("s" + std::to_string(i));
  const UniformTokenModel uniform(vocab);
  const std::vector<std::string> demo{"s1", "s4", "s9"};
  const double l = sft_loss(uniform, "ctx", demo);
  const double expected = 3.0 * std::log(10.0);
  const bool closed = std::abs(l - expected) <= kSftTol;

  // Linearity of the total objective in lambda.
  const std::vector<double> sft{0.0, 2.0, 0.0, 1.5, 0.0, 0.7};
  const std::vector<ActionType> actions{ActionType::Eval,   ActionType::Defer,  ActionType::Create,
                                        ActionType::Defer,  ActionType::Eval,   ActionType::Create};
  const double inner = 0.37;
  const double slope = (2.0 + 1.5) / static_cast<double>(actions.size());
  double worst = 0.0;
  for (double lambda : {0.0, 0.5, 1.0}) {
    worst = std::max(worst, std::abs(total_loss(inner, sft, actions, lambda) - (inner + lambda * slope)));
  }
  const bool linear = worst <= kSftTol;
  Outcome o;
  o.pass = closed && linear;
  o.detail = fmt("L_SFT(V=10,L=3) = %.12f", l) + fmt(" vs 3 ln 10 = %.12f", expected) +
             fmt("; max deviation from linear in lambda %.3g", worst);
  return o;
}

// ---------------------------------------------------------------------------
// Grammar and determinism
// ---------------------------------------------------------------------------

struct ParseCase {
  std::string text;
  std::size_t n;
  std::optional<std::string> expected;  // serialized action, nullopt = must fail
};

std::vector<ParseCase> parser_corpus() {
  std::vector<ParseCase> c = {
      {"DEFER", 3, "DEFER"},
      {"CREATE", 3, "CREATE"},
      {"EVAL 0", 3, "EVAL 0"},
      {"EVAL 2", 3, "EVAL 2"},
      {"  DEFER  ", 3, "DEFER"},
      {"\tCREATE\t", 3, "CREATE"},
      {"EVAL    1", 3, "EVAL 1"},
      {"EVAL\t1", 3, "EVAL 1"},
      {"Thinking...\nDEFER", 3, "DEFER"},
      {"reasoning first\n\nCREATE\n", 3, "CREATE"},
      {"EVAL 1\nDEFER", 3, "EVAL 1"},
      {"DEFER\nEVAL 1", 3, "DEFER"},
      {"preamble\r\nEVAL 0\r\n", 3, "EVAL 0"},
      {"Action: DEFER\nCREATE", 3, "CREATE"},
      {"EVAL 4", 5, "EVAL 4"},
      {"EVAL 0", 1, "EVAL 0"},
      {"EVAL 007", 8, "EVAL 7"},
      {"  \n  \nDEFER", 3, "DEFER"},
      {"CREATE\nCREATE", 3, "CREATE"},
      {"defer\nDEFER", 3, "DEFER"},
      {"EVAL 9", 10, "EVAL 9"},
      {"I will go with\nEVAL 2\nbecause", 3, "EVAL 2"},
      {"DEFER ", 3, "DEFER"},
      {" EVAL 1 ", 3, "EVAL 1"},
      {"EVAL 12", 20, "EVAL 12"},
      // invalid
      {"", 3, std::nullopt},
      {"   ", 3, std::nullopt},
      {"defer", 3, std::nullopt},
      {"Defer", 3, std::nullopt},
      {"create", 3, std::nullopt},
      {"eval 1", 3, std::nullopt},
      {"EVAL", 3, std::nullopt},
      {"EVAL x", 3, std::nullopt},
      {"EVAL 1.0", 3, std::nullopt},
      {"EVAL -1", 3, std::nullopt},
      {"EVAL 3", 3, std::nullopt},
      {"EVAL 99999999999999999999999", 3, std::nullopt},
      {"DEFER please", 3, std::nullopt},
      {"CREATE now", 3, std::nullopt},
      {"I choose DEFER", 3, std::nullopt},
      {"EVAL 1 2", 3, std::nullopt},
      {"EVAL1", 3, std::nullopt},
      {"DEFERCREATE", 3, std::nullopt},
      {"ACTION", 3, std::nullopt},
      {"EVAL 0", 0, std::nullopt},
      {"EVAL 5", 5, std::nullopt},
      {"**DEFER**", 3, std::nullopt},
      {"`CREATE`", 3, std::nullopt},
      {"EVAL +1", 3, std::nullopt},
      {"D E F E R", 3, std::nullopt},
      {"nothing useful here\nreally", 3, std::nullopt},
      {"EVAL 3\nDEFER", 3, std::nullopt},
  };
  return c;
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b)) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    why = "file lists differ";
    return false;
  }
  for (const auto& rel : fa) {
    if (fs::is_directory(a / rel)) continue;
    std::ifstream ia(a / rel, std::ios::binary), ib(b / rel, std::ios::binary);
    std::stringstream sa, sb;
    sa << ia.rdbuf();
    sb << ib.rdbuf();
    if (sa.str() != sb.str()) {
      why = rel.string() + " differs";
      return false;
    }
  }
  return true;
}

Outcome check_grammar_determinism() {
  const auto corpus = parser_corpus();
  std::size_t ok = 0;
  std::string first_bad;
  for (const auto& c : corpus) {
    bool good = false;
    try {
      const auto a = parse_action_line(c.text, c.n);
      good = c.expected && a.serialize() == *c.expected;
    } catch (const ActionParseError&) {
      good = !c.expected;
    }
    if (good) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = c.text;
    }
  }

  const fs::path root = fs::temp_directory_path() / ("hila-accept-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path tasks = root / "tasks.jsonl";
  {
    std::vector<json> rows;
    for (const auto& t : synthetic_suite(12, 51, "det")) rows.push_back(t);
    write_jsonl(tasks, rows);
  }
  std::ostringstream sink;
  auto run = [&](const fs::path& out) {
    const std::string t = tasks.string(), o = out.string();
    const char* argv[] = {"hila", "run", "--tasks", t.c_str(), "--agents", "3", "--rounds", "3",
                          "--expert", "oracle", "--seed", "7", "--out", o.c_str()};
    return run_cli(static_cast<int>(std::size(argv)), argv, sink, sink);
  };
  const int ca = run(root / "a"), cb = run(root / "b");
  std::string why;
  const bool identical = ca == 0 && cb == 0 && same_tree(root / "a", root / "b", why);
  fs::remove_all(root);

  Outcome o;
  o.pass = ok == corpus.size() && corpus.size() >= kMinParserCases && identical;
  o.detail = std::to_string(ok) + "/" + std::to_string(corpus.size()) + " parser cases";
  if (!first_bad.empty()) o.detail += " (first failure: '" + first_bad + "')";
  o.detail += identical ? "; run directories byte-identical" : "; run directories differ: " + why;
  return o;
}

// ---------------------------------------------------------------------------
// Token accounting
// ---------------------------------------------------------------------------

Outcome check_tokens() {
  const auto tasks = synthetic_suite(9, 61, "tok");
  const std::vector<double> agents{1, 3, 5};
  const std::vector<std::uint64_t> seeds{1};
  constexpr std::size_t kVerbosity = 40;
  std::vector<std::string> failures;

  SweepBase base;
  base.setup.agent.competence = {0.6};
  base.setup.agent.verbosity = kVerbosity;
  base.episode.num_rounds = 3;

  // Every agent regenerates every round: N*T calls per task.
  base.policy = std::make_shared<ScriptedPolicy>(StrategicAction::create());
  const auto create_rows = sweep(SweepAxis::Agents, agents, seeds, tasks, base);
  std::vector<double> totals;
  for (const auto& r : create_rows) {
    if (!r.seed) continue;
    if (r.error) {
      failures.push_back(*r.error);
      continue;
    }
    totals.push_back(r.tokens_total);
    const double calls = r.value * base.episode.num_rounds * static_cast<double>(tasks.size());
    if (r.tokens_out != calls * kVerbosity) failures.push_back("output tokens at N=" + fmt("%g", r.value));
  }
  const bool increasing = totals.size() == 3 && totals[0] < totals[1] && totals[1] < totals[2];

  // Copy-only rounds: only round 0 generates, from the base prompt.
  base.policy = std::make_shared<ScriptedPolicy>(StrategicAction::eval(0));
  const auto eval_rows = sweep(SweepAxis::Agents, agents, seeds, tasks, base);
  double prompt_tokens = 0;
  for (const auto& t : tasks) prompt_tokens += static_cast<double>(count_tokens(render_base_prompt(t)));
  for (const auto& r : eval_rows) {
    if (!r.seed || r.error) continue;
    const double expected = r.value * (prompt_tokens + kVerbosity * static_cast<double>(tasks.size()));
    if (r.tokens_total != expected) failures.push_back("copy-only total at N=" + fmt("%g", r.value));
  }

  Outcome o;
  o.pass = increasing && failures.empty();
  o.detail = "all-Create totals";
  for (double t : totals) o.detail += fmt(" %.0f", t);
  o.detail += increasing ? " (strictly increasing)" : " (not increasing)";
  o.detail += failures.empty() ? "; output = calls x verbosity and copy-only totals match exactly" : "";
  for (const auto& f : failures) o.detail += "; mismatch: " + f;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient-correctness", check_gradients},
      {"advantage-centering", check_centering},
      {"oracle-convergence", check_convergence},
      {"cost-knob-monotonicity", check_cost_knob},
      {"dual-loop-trend", check_dual_loop},
      {"protocol-exactness", check_protocol},
      {"sft-closed-forms", check_sft_closed_forms},
      {"grammar-and-determinism", check_grammar_determinism},
      {"token-accounting", check_tokens},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
