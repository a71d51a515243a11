#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "hila/outer_loop.hpp"
#include "hila/rng.hpp"
#include "hila/training.hpp"

using namespace hila;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hila-outer-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Demonstration demo(std::string task, int round, ExpertLevel level = ExpertLevel::Reasoning, std::string answer = "42") {
  Demonstration d;
  d.task_id = std::move(task);
  d.state_snapshot = "prompt for " + d.task_id;
  d.level = level;
  d.text = "work\n" + answer;
  d.normalized_answer = answer;
  d.source = "oracle";
  d.round_index = round;
  return d;
}

PolicyParams defer_rate_policy(double p_defer) {
  PolicyParams p;
  p.bias(ActionType::Eval) = std::log((1 - p_defer) / 2);
  p.bias(ActionType::Create) = std::log((1 - p_defer) / 2);
  p.bias(ActionType::Defer) = std::log(p_defer);
  return p;
}

}  // namespace

TEST_CASE("one stored demonstration per shared expert call") {
  const auto task = synthetic_suite(1, 4)[0];
  SyntheticSetup setup;
  Backends b = make_synthetic_backends(setup, 3);
  ScriptedPolicy policy;
  policy.set(1, 0, StrategicAction::defer()).set(1, 2, StrategicAction::defer());
  EpisodeConfig c;
  c.num_rounds = 2;
  DemonstrationStore store;
  EpisodeHooks hooks;
  hooks.on_defer = [&](const DeferEvent& e) { record_demonstration(store, e); };
  run_episode(task, c, b.agents, *b.expert, policy, hooks);
  REQUIRE(store.size() == 1);
  const auto d = store.snapshot()[0];
  CHECK(d.task_id == task.id);
  CHECK(d.agent == 0);
  CHECK(d.round_index == 1);
  CHECK(d.source == "oracle");
  CHECK(d.normalized_answer == task.gold);
  CHECK(d.timestamp == 1);

  // Replaying the same episode changes nothing.
  run_episode(task, c, b.agents, *b.expert, policy, hooks);
  CHECK(store.size() == 1);
}

TEST_CASE("demonstration count matches the per-round closed form") {
  constexpr double kDefer = 0.29;
  constexpr int kEpisodes = 100, kAgents = 3, kRounds = 3;
  const auto suite = synthetic_suite(kEpisodes, 17);
  SyntheticSetup setup;
  Backends b = make_synthetic_backends(setup, kAgents);
  EpisodeConfig c;
  c.num_agents = kAgents;
  c.num_rounds = kRounds;
  c.seed = 99;
  DemonstrationStore store;
  EpisodeHooks hooks;
  hooks.on_defer = [&](const DeferEvent& e) { record_demonstration(store, e); };
  std::int64_t calls = 0;
  for (const auto& e : run_episodes(suite, c, b.agents, *b.expert, ParametricPolicy(defer_rate_policy(kDefer)), hooks)) {
    calls += e.expert_calls;
  }
  // A round yields one demonstration when at least one of its agents defers.
  const double p_round = 1.0 - std::pow(1.0 - kDefer, kAgents);
  const double rounds = kEpisodes * (kRounds - 1);
  const double expected = rounds * p_round;
  const double sd = std::sqrt(rounds * p_round * (1 - p_round));
  CHECK(static_cast<std::int64_t>(store.size()) == calls);
  CHECK(std::abs(static_cast<double>(store.size()) - expected) < 4 * sd);
}

TEST_CASE("store persists, dedupes and keeps timestamps increasing") {
  const auto dir = scratch("store");
  const auto path = dir / "demos.jsonl";
  {
    DemonstrationStore s(path);
    CHECK(s.append(demo("a", 1)));
    CHECK(s.append(demo("b", 1)));
    CHECK_FALSE(s.append(demo("a", 1)));
  }
  DemonstrationStore s(path);
  CHECK(s.size() == 2);
  CHECK(s.append(demo("c", 2)));
  const auto all = s.snapshot();
  CHECK(all.back().timestamp == 3);
  CHECK_FALSE(s.append(demo("b", 1)));
  std::ifstream in(path);
  int lines = 0;
  for (std::string l; std::getline(in, l);) {
    CHECK(json::parse(l).is_object());
    ++lines;
  }
  CHECK(lines == 3);
  fs::remove_all(dir);
}

TEST_CASE("supervised loss closed forms") {
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(std::to_string(i));
  const std::vector<std::string> three{"1", "5", "9"};
  CHECK(sft_loss(UniformTokenModel(ten), "ctx", three) == doctest::Approx(3 * std::log(10.0)).epsilon(1e-14));

  const CategoricalTokenModel certain({"x", "y"}, {0.0, -1e4});
  CHECK(sft_loss(certain, "", std::vector<std::string>{"x", "x"}) == doctest::Approx(0.0));

  const CategoricalTokenModel skew({"a", "b", "c"}, {std::log(0.5), std::log(0.25), std::log(0.25)});
  CHECK(sft_loss(skew, "", std::vector<std::string>{"a", "b", "c"}) ==
        doctest::Approx(-(std::log(0.5) + 2 * std::log(0.25))).epsilon(1e-14));
  CHECK(sft_loss(skew, "", std::vector<std::string>{"a", "b", "c"}) == doctest::Approx(3.4657).epsilon(1e-4));

  try {
    sft_loss(UniformTokenModel(ten), "", std::vector<std::string>{"1", "zz"});
    FAIL("expected out-of-support");
  } catch (const OutOfSupportError& e) {
    CHECK(e.position() == 1);
  }
}

TEST_CASE("total objective") {
  const std::vector<double> sft{0.0, 2.0};
  const std::vector<ActionType> one_defer{ActionType::Eval, ActionType::Defer};
  const std::vector<ActionType> none{ActionType::Eval, ActionType::Create};
  CHECK(total_loss(0.4, sft, none, 0.5) == 0.4);
  CHECK(total_loss(0.4, sft, one_defer, 0.0) == 0.4);
  CHECK(total_loss(0.4, sft, one_defer, 0.5) == doctest::Approx(0.4 + 0.5 * 2.0 / 2));
  for (double lam : {0.0, 0.25, 0.5, 1.0, 3.0}) {
    CHECK(total_loss(0.4, sft, one_defer, lam) == doctest::Approx(0.4 + lam * 1.0).epsilon(1e-15));
  }
}

TEST_CASE("joint gradient matches finite differences") {
  Rng rng(12);
  const std::vector<std::string> vocab{"a", "b", "c"};
  for (int draw = 0; draw < 20; ++draw) {
    PolicyParams p;
    for (double& w : p.weights) w = rng.uniform() - 0.5;
    std::vector<GroupSample> batch(4);
    for (auto& s : batch) {
      for (double& f : s.features) f = rng.uniform();
      s.rewards = {rng.uniform(), rng.uniform(), rng.uniform()};
      s.set_advantages(false);
      if (rng.bernoulli(0.7)) s.defer_demo_tokens = std::vector<std::string>{"a", vocab[rng.below(3)]};
    }
    std::vector<double> logits{rng.uniform(), rng.uniform(), rng.uniform()};
    TrainerConfig c;
    const double lam = 0.7;
    const auto j = joint_loss_and_grad(p, PolicyParams{}, batch, c, CategoricalTokenModel(vocab, logits), lam);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      auto hi = logits, lo = logits;
      hi[k] += 1e-6;
      lo[k] -= 1e-6;
      const double fd = (joint_loss_and_grad(p, PolicyParams{}, batch, c, CategoricalTokenModel(vocab, hi), lam).total -
                         joint_loss_and_grad(p, PolicyParams{}, batch, c, CategoricalTokenModel(vocab, lo), lam).total) /
                        2e-6;
      CHECK(fd == doctest::Approx(j.token_grad[k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("joint training lowers the objective under both schedules") {
  Rng rng(13);
  std::vector<GroupSample> data(32);
  for (auto& s : data) {
    for (double& f : s.features) f = rng.uniform();
    s.rewards = {0.0, 0.4, 0.8};
    s.set_advantages(true);
    s.defer_demo_tokens = std::vector<std::string>{"a", "a", "b"};
  }
  TrainerConfig c;
  c.epochs = 20;
  c.batch_size = 8;
  for (auto sched : {JointSchedule::Interleaved, JointSchedule::Staged}) {
    const auto r = train_joint(PolicyParams{}, CategoricalTokenModel({"a", "b", "c"}), data, c, 1.0, sched);
    REQUIRE(r.total_loss.size() >= 2);
    CHECK(r.total_loss.back() < r.total_loss.front());
    // "a" is the most frequent demo token, so it should end up most likely.
    CHECK(r.token_logits[0] > r.token_logits[2]);
  }
  CHECK(parse_joint_schedule("staged") == JointSchedule::Staged);
}

TEST_CASE("SFT export") {
  const auto dir = scratch("export");
  CHECK(export_sft(std::vector<Demonstration>{}, dir / "empty.jsonl") == 0);
  CHECK(fs::exists(dir / "empty.jsonl"));
  CHECK(fs::file_size(dir / "empty.jsonl") == 0);

  auto a = demo("a", 1, ExpertLevel::Idea);
  a.timestamp = 5;
  auto b = demo("b", 1);
  b.timestamp = 2;
  const std::vector<Demonstration> demos{a, b};
  CHECK(export_sft(demos, dir / "all.jsonl") == 2);
  std::ifstream in(dir / "all.jsonl");
  std::vector<json> rows;
  for (std::string l; std::getline(in, l);) rows.push_back(json::parse(l));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("task_id") == "b");
  for (const auto& r : rows) {
    CHECK_FALSE(r.at("prompt").get<std::string>().empty());
    CHECK_FALSE(r.at("completion").get<std::string>().empty());
    CHECK(r.contains("level"));
    CHECK(r.contains("source"));
  }
  CHECK(export_sft(demos, dir / "idea.jsonl", ExpertLevel::Idea) == 1);
  fs::remove_all(dir);
}

TEST_CASE("competence growth") {
  TaskInstance t{"t", TaskKind::MathNumeric, "q", std::string("42"), {}, std::nullopt};
  const std::string fam = task_family(t);
  CompetenceModel m;
  m.eta = 0.2;
  CHECK(assimilate(m, demo("t", 1), t, 0.5));
  CHECK(m.get(fam, 0) == doctest::Approx(0.6));

  CompetenceModel top;
  top.families[fam] = 1.0;
  assimilate(top, demo("t", 1), t, 0.5);
  CHECK(top.get(fam, 0) == 1.0);

  CompetenceModel g;
  g.eta = 0.1;
  for (int i = 0; i < 10; ++i) assimilate(g, demo("t", i), t, 0.3);
  CHECK(g.get(fam, 0) == doctest::Approx(1 - 0.7 * std::pow(0.9, 10)).epsilon(1e-12));
  CHECK(g.get(fam, 0) == doctest::Approx(0.7559).epsilon(1e-4));

  // Wrong or answerless demonstrations teach nothing.
  CompetenceModel w;
  CHECK_FALSE(assimilate(w, demo("t", 1, ExpertLevel::Reasoning, "41"), t, 0.3));
  auto idea = demo("t", 1, ExpertLevel::Idea);
  idea.normalized_answer.reset();
  CHECK_FALSE(assimilate(w, idea, t, 0.3));
  CHECK(w.get(fam, 0.3) == 0.3);

  SyntheticAgentSpec spec;
  const auto applied = apply_competence(spec, g);
  CHECK(applied.competence_for(t) == doctest::Approx(g.get(fam, 0)));
}
