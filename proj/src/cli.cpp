#include "hila/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <thread>

#include "hila/backends.hpp"
#include "hila/chat_client.hpp"
#include "hila/collaboration.hpp"
#include "hila/json_io.hpp"
#include "hila/metrics.hpp"
#include "hila/outer_loop.hpp"
#include "hila/service.hpp"
#include "hila/training.hpp"

namespace hila {

namespace fs = std::filesystem;

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // tasks
  std::string tasks;
  std::size_t synthetic_tasks = 0;
  std::uint64_t suite_seed = 0;
  // episode
  std::size_t agents = 3;
  int rounds = 3;
  std::string policy = "parametric";
  std::string policy_file;
  std::map<std::string, std::vector<std::string>> script;
  std::string expert = "oracle";
  double expert_reliability = 0.8;
  std::string defer_level = "reasoning";
  std::uint64_t seed = 0;
  std::string seeds = "1..5";
  int agent_attempts = 3;
  bool parallel = false;
  // synthetic backends
  std::string agent_backend = "synthetic";
  std::vector<double> competence{0.5};
  std::size_t verbosity = 32;
  std::size_t distractors = 3;
  std::size_t expert_verbosity = 48;
  // remote backends
  std::string api_base = "http://127.0.0.1:8000/v1";
  std::string model;
  std::string expert_model;
  double top_p = 0.95;
  double temperature = 0.7;
  int max_tokens = 1024;
  double expert_temperature = 0.3;
  int max_retries = 3;
  double request_timeout_s = 60;
  int max_in_flight = 4;
  // reward and training
  double c_create = 0.1;
  double c_defer = 0.2;
  double lr = 0.05;
  int epochs = 50;
  std::size_t batch_size = 64;
  double beta_kl = 0.02;
  double beta_ent = 0.0;
  double eps = 0.2;
  std::string surrogate = "clip";
  bool adv_norm = true;
  std::string optimizer = "adam";
  bool cosine_decay = true;
  double gamma = 1.0;
  int iterations = 8;
  double lambda_sft = 0.5;
  double eta = 0.05;
  std::string groups;
  // sweep
  std::string axis = "agents";
  std::string values = "1,3,5";
  std::size_t parallelism = 1;
  // service
  std::string host = "127.0.0.1";
  int port = 8080;
  double human_timeout_s = 1800;
  std::string queue;
  // export / eval
  std::string demos;
  std::string level;
  std::string run_dir;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    RunConfig, tasks, synthetic_tasks, suite_seed, agents, rounds, policy, policy_file, script, expert,
    expert_reliability, defer_level, seed, seeds, agent_attempts, parallel, agent_backend, competence, verbosity,
    distractors, expert_verbosity, api_base, model, expert_model, top_p, temperature, max_tokens, expert_temperature,
    max_retries, request_timeout_s, max_in_flight, c_create, c_defer, lr, epochs, batch_size, beta_kl, beta_ent, eps,
    surrogate, adv_norm, optimizer, cosine_decay, gamma, iterations, lambda_sft, eta, groups, axis, values,
    parallelism, host, port, human_timeout_s, queue, demos, level, run_dir)

enum class Kind { Int, UInt, Real, Text, Flag, RealList };

struct OptionSpec {
  const char* key;
  Kind kind;
  const char* help;
};

// Flags are the keys with '_' spelled '-'.
const std::vector<OptionSpec>& option_specs() {
  static const std::vector<OptionSpec> specs = {
      {"tasks", Kind::Text, "task file (JSONL)"},
      {"synthetic_tasks", Kind::UInt, "generate this many synthetic tasks instead of reading --tasks"},
      {"suite_seed", Kind::UInt, "seed for the synthetic task suite"},
      {"agents", Kind::UInt, "number of agents N"},
      {"rounds", Kind::Int, "number of rounds T"},
      {"policy", Kind::Text, "parametric | llm-prompted | scripted"},
      {"policy_file", Kind::Text, "policy checkpoint (JSON)"},
      {"expert", Kind::Text, "oracle | noisy | remote-proxy | human-console"},
      {"expert_reliability", Kind::Real, "probability the noisy expert is right"},
      {"defer_level", Kind::Text, "idea | reasoning"},
      {"seed", Kind::UInt, "master seed"},
      {"seeds", Kind::Text, "seed list for sweeps, e.g. 1..5"},
      {"agent_attempts", Kind::Int, "attempts per agent call"},
      {"parallel", Kind::Flag, "run Create calls of a round concurrently"},
      {"agent_backend", Kind::Text, "synthetic | remote"},
      {"competence", Kind::RealList, "synthetic competence per difficulty band"},
      {"verbosity", Kind::UInt, "synthetic output length in tokens"},
      {"distractors", Kind::UInt, "synthetic wrong answers per task"},
      {"expert_verbosity", Kind::UInt, "synthetic expert output length in tokens"},
      {"api_base", Kind::Text, "chat-completion base URL"},
      {"model", Kind::Text, "agent model id"},
      {"expert_model", Kind::Text, "proxy expert model id"},
      {"top_p", Kind::Real, "agent top_p"},
      {"temperature", Kind::Real, "agent temperature"},
      {"max_tokens", Kind::Int, "max tokens per completion"},
      {"expert_temperature", Kind::Real, "proxy expert temperature"},
      {"max_retries", Kind::Int, "retries for transient HTTP failures"},
      {"request_timeout_s", Kind::Real, "HTTP timeout in seconds"},
      {"max_in_flight", Kind::Int, "concurrent requests per client"},
      {"c_create", Kind::Real, "CREATE cost"},
      {"c_defer", Kind::Real, "DEFER cost"},
      {"lr", Kind::Real, "learning rate"},
      {"epochs", Kind::Int, "epochs per training iteration"},
      {"batch_size", Kind::UInt, "groups per mini-batch"},
      {"beta_kl", Kind::Real, "KL weight"},
      {"beta_ent", Kind::Real, "entropy weight"},
      {"eps", Kind::Real, "clip epsilon"},
      {"surrogate", Kind::Text, "clip | reinforce"},
      {"adv_norm", Kind::Flag, "normalize advantages by the group stdev"},
      {"optimizer", Kind::Text, "adam | sgd"},
      {"cosine_decay", Kind::Flag, "cosine learning-rate decay"},
      {"gamma", Kind::Real, "discount (recorded, unused by the losses)"},
      {"iterations", Kind::Int, "collect/train iterations"},
      {"lambda_sft", Kind::Real, "SFT weight in the total objective"},
      {"eta", Kind::Real, "competence assimilation rate"},
      {"groups", Kind::Text, "train offline from this group dataset (JSONL)"},
      {"axis", Kind::Text, "agents | rounds | c_defer"},
      {"values", Kind::Text, "comma list of axis values"},
      {"parallelism", Kind::UInt, "sweep cells run concurrently"},
      {"host", Kind::Text, "service host"},
      {"port", Kind::Int, "service port"},
      {"human_timeout_s", Kind::Real, "seconds to wait for a human expert"},
      {"queue", Kind::Text, "pending-request store (JSON)"},
      {"demos", Kind::Text, "demonstration store (JSONL)"},
      {"level", Kind::Text, "export only this level: idea | reasoning"},
      {"run_dir", Kind::Text, "existing run directory"},
  };
  return specs;
}

std::string flag_name(const char* key) {
  std::string f = std::string("--") + key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

void add_config_options(CLI::App* cmd, json& overrides) {
  for (const auto& spec : option_specs()) {
    const std::string key = spec.key;
    const std::string flag = flag_name(spec.key);
    switch (spec.kind) {
      case Kind::Int:
        cmd->add_option_function<long long>(flag, [&overrides, key](long long v) { overrides[key] = v; }, spec.help);
        break;
      case Kind::UInt:
        cmd->add_option_function<unsigned long long>(
            flag, [&overrides, key](unsigned long long v) { overrides[key] = v; }, spec.help);
        break;
      case Kind::Real:
        cmd->add_option_function<double>(flag, [&overrides, key](double v) { overrides[key] = v; }, spec.help);
        break;
      case Kind::Text:
        cmd->add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides[key] = v; },
                                              spec.help);
        break;
      case Kind::Flag:
        cmd->add_option_function<bool>(flag, [&overrides, key](bool v) { overrides[key] = v; }, spec.help)
            ->type_name("BOOL");
        break;
      case Kind::RealList:
        cmd->add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides[key] = parse_value_list(v); }, spec.help);
        break;
    }
  }
}

RunConfig resolve_config(const std::string& config_file, const json& overrides) {
  json resolved = RunConfig{};
  if (!config_file.empty()) {
    json file;
    try {
      file = read_json_file(config_file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [k, v] : file.items()) {
      if (!resolved.contains(k)) throw ConfigError("unknown config key '" + k + "' in " + config_file);
      resolved[k] = v;
    }
  }
  for (const auto& [k, v] : overrides.items()) resolved[k] = v;
  try {
    return resolved.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

std::string default_out_dir() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return std::string("runs/") + buf;
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

EpisodeConfig episode_config(const RunConfig& c) {
  EpisodeConfig e;
  e.num_agents = c.agents;
  e.num_rounds = c.rounds;
  e.policy_mode = parse_policy_mode(c.policy);
  e.expert_backend = c.expert;
  e.seed = c.seed;
  e.defer_level = parse_expert_level(c.defer_level);
  e.agent_attempts = c.agent_attempts;
  e.parallel = c.parallel;
  e.validate();
  return e;
}

RewardConfig reward_config(const RunConfig& c) {
  RewardConfig r{c.c_create, c.c_defer, 1.0};
  r.validate();
  return r;
}

TrainerConfig trainer_config(const RunConfig& c) {
  TrainerConfig t;
  t.learning_rate = c.lr;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.beta_kl = c.beta_kl;
  t.beta_ent = c.beta_ent;
  t.clip_eps = c.eps;
  t.surrogate = parse_surrogate(c.surrogate);
  t.normalize_advantages = c.adv_norm;
  t.seed = c.seed;
  t.optimizer = parse_optimizer(c.optimizer);
  t.cosine_decay = c.cosine_decay;
  t.gamma = c.gamma;
  t.validate();
  return t;
}

SyntheticSetup synthetic_setup(const RunConfig& c) {
  SyntheticSetup s;
  s.agent.competence = c.competence;
  s.agent.verbosity = c.verbosity;
  s.agent.distractors = c.distractors;
  s.agent.validate();
  s.expert = c.expert;
  s.expert_reliability = c.expert_reliability;
  s.expert_verbosity = c.expert_verbosity;
  return s;
}

RemoteClientConfig agent_client_config(const RunConfig& c) {
  RemoteClientConfig r;
  r.base_url = c.api_base;
  r.model = c.model;
  r.top_p = c.top_p;
  r.temperature = c.temperature;
  r.max_tokens = c.max_tokens;
  r.max_retries = c.max_retries;
  r.timeout = std::chrono::milliseconds(static_cast<long long>(c.request_timeout_s * 1000));
  r.max_in_flight = c.max_in_flight;
  return r.with_env_overrides();
}

std::vector<TaskInstance> load_task_list(const RunConfig& c) {
  if (c.synthetic_tasks > 0) return synthetic_suite(c.synthetic_tasks, c.suite_seed);
  if (c.tasks.empty()) throw ConfigError("--tasks or --synthetic-tasks is required");
  return load_tasks(c.tasks);
}

/// Everything an episode needs, owned in one place.
struct Runtime {
  std::vector<std::unique_ptr<AgentBackend>> owned_agents;
  std::vector<AgentBackend*> agents;
  std::unique_ptr<ExpertBackend> expert;
  std::shared_ptr<ChatClient> agent_client;
  std::unique_ptr<MetaPolicy> policy;
};

Runtime build_runtime(const RunConfig& c, PendingQueue* queue) {
  Runtime rt;
  if (c.agent_backend == "synthetic") {
    SyntheticAgentSpec spec;
    spec.competence = c.competence;
    spec.verbosity = c.verbosity;
    spec.distractors = c.distractors;
    for (std::size_t i = 0; i < c.agents; ++i) rt.owned_agents.push_back(std::make_unique<SyntheticAgent>(spec));
  } else if (c.agent_backend == "remote") {
    if (c.model.empty()) throw ConfigError("--model is required with --agent-backend remote");
    rt.agent_client = std::make_shared<ChatClient>(agent_client_config(c));
    for (std::size_t i = 0; i < c.agents; ++i) rt.owned_agents.push_back(std::make_unique<RemoteAgent>(rt.agent_client));
  } else {
    throw ConfigError("unknown agent backend: " + c.agent_backend);
  }
  for (auto& a : rt.owned_agents) rt.agents.push_back(a.get());

  if (c.expert == "oracle") {
    rt.expert = std::make_unique<OracleExpert>(c.expert_verbosity);
  } else if (c.expert == "noisy") {
    rt.expert = std::make_unique<NoisyExpert>(c.expert_reliability, c.expert_verbosity);
  } else if (c.expert == "remote-proxy") {
    RemoteClientConfig rc = agent_client_config(c);
    rc.temperature = c.expert_temperature;
    rc.model = c.expert_model.empty() ? c.model : c.expert_model;
    if (rc.model.empty()) throw ConfigError("--expert-model is required for the remote-proxy expert");
    rt.expert = std::make_unique<RemoteProxyExpert>(std::make_shared<ChatClient>(rc));
  } else if (c.expert == "human-console") {
    if (!queue) throw ConfigError("the human-console expert needs the service queue");
    rt.expert = std::make_unique<HumanConsoleExpert>(
        *queue, std::chrono::milliseconds(static_cast<long long>(c.human_timeout_s * 1000)));
  } else {
    throw ConfigError("unknown expert: " + c.expert);
  }

  switch (parse_policy_mode(c.policy)) {
    case PolicyMode::Parametric:
      rt.policy = std::make_unique<ParametricPolicy>(c.policy_file.empty() ? PolicyParams{} : load_policy(c.policy_file));
      break;
    case PolicyMode::Scripted: {
      auto p = std::make_unique<ScriptedPolicy>();
      for (const auto& [round, actions] : c.script) {
        int r = 0;
        if (std::from_chars(round.data(), round.data() + round.size(), r).ec != std::errc{} || r < 1) {
          throw ConfigError("script keys are round numbers >= 1, got '" + round + "'");
        }
        for (std::size_t i = 0; i < actions.size(); ++i) {
          try {
            p->set(r, i, parse_action_line(actions[i], c.agents));
          } catch (const ActionParseError& e) {
            throw ConfigError("script round " + round + ", agent " + std::to_string(i) + ": " + e.what());
          }
        }
      }
      rt.policy = std::move(p);
      break;
    }
    case PolicyMode::LlmPrompted: {
      if (!rt.agent_client) throw ConfigError("the llm-prompted policy needs --agent-backend remote");
      auto client = rt.agent_client;
      rt.policy = std::make_unique<LlmPromptedPolicy>([client](const std::string& prompt) {
        ChatResult r = client->complete_prompt(prompt);
        return std::make_pair(r.content, r.usage);
      });
      break;
    }
  }
  return rt;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_resolved_config(const fs::path& dir, const RunConfig& c, const std::string& command) {
  json j = c;
  j["command"] = command;
  write_json_file(dir / "config.json", j);
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

// ---------------------------------------------------------------------------

int cmd_run(const RunConfig& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  auto tasks = load_task_list(c);
  EpisodeConfig ec = episode_config(c);
  fs::create_directories(out_dir / "episodes");
  write_resolved_config(out_dir, c, "run");

  std::unique_ptr<PendingQueue> queue;
  GuidanceStore guidance;
  EpisodeRegistry registry(out_dir / "episodes");
  std::unique_ptr<Service> service;
  if (c.expert == "human-console") {
    queue = std::make_unique<PendingQueue>(out_dir / "pending.json");
    std::set<std::string> ids;
    for (const auto& t : tasks) ids.insert(t.id);
    service = std::make_unique<Service>(ServiceContext{*queue, guidance, registry, ids});
    const int port = service->start(c.host, c.port);
    out << "service listening on " << c.host << ":" << port << "\n" << std::flush;
  }
  Runtime rt = build_runtime(c, queue.get());
  DemonstrationStore demos(out_dir / "demos.jsonl");
  EpisodeHooks hooks;
  hooks.on_defer = [&](const DeferEvent& e) { record_demonstration(demos, e); };

  std::vector<EpisodeResult> results;
  std::size_t pending = 0;
  for (const auto& task : tasks) {
    EpisodeConfig e = ec;
    e.seed = episode_seed(c.seed, task.id);
    e.guidance = guidance.get(task.id);
    const fs::path stem = out_dir / "episodes" / safe_file_stem(task.id);
    try {
      EpisodeResult r = run_episode(task, e, rt.agents, *rt.expert, *rt.policy, hooks);
      const json j = r;
      write_json_file(stem.string() + ".json", j);
      fs::remove(stem.string() + ".pending.json");
      registry.publish(task.id, j);
      results.push_back(std::move(r));
    } catch (const ExpertTimeout& t) {
      ++pending;
      write_json_file(stem.string() + ".pending.json",
                      {{"task_id", task.id}, {"request_id", t.request_id()}, {"status", "pending"}});
      err << "task " << task.id << ": waiting on expert request " << t.request_id() << "; marked pending\n";
    }
  }
  if (!results.empty()) {
    RunSummary s = summarize(results);
    s.config_fingerprint = config_fingerprint(json(c).dump());
    write_summary_csv(out_dir / "summary.csv", std::span(&s, 1));
    out << "episodes " << s.episodes << ", accuracy " << s.accuracy;
    if (s.distribution) {
      out << ", p_eval " << (*s.distribution)[0] << ", p_create " << (*s.distribution)[1] << ", p_defer "
          << (*s.distribution)[2];
    }
    out << "\n";
  }
  if (pending) out << pending << " episode(s) pending on the expert; re-run to resume\n";
  if (service) service->stop();
  out << "run directory: " << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const fs::path& out_dir, std::ostream& out) {
  const TrainerConfig tc = trainer_config(c);
  const PolicyParams initial = c.policy_file.empty() ? PolicyParams{} : load_policy(c.policy_file);
  fs::create_directories(out_dir);
  write_resolved_config(out_dir, c, "train");

  PolicyParams trained;
  std::vector<EpochTelemetry> telemetry;
  if (!c.groups.empty()) {
    const auto groups = load_groups(c.groups, tc.normalize_advantages);
    TrainResult r = train(initial, groups, tc);
    trained = r.params;
    telemetry = std::move(r.telemetry);
    out << "trained on " << groups.size() << " groups, " << r.steps << " steps\n";
  } else {
    if (parse_policy_mode(c.policy) != PolicyMode::Parametric) {
      throw ConfigError("training collects with the parametric policy; use --policy parametric");
    }
    const auto tasks = load_task_list(c);
    Runtime rt = build_runtime(c, nullptr);
    PolicyTrainingConfig pc{episode_config(c), reward_config(c), tc, c.iterations};
    DemonstrationStore demos(out_dir / "demos.jsonl");
    PolicyTrainingResult r = train_policy(tasks, pc, rt.agents, *rt.expert, initial, &demos);
    save_groups(out_dir / "groups.jsonl", r.last_groups);
    trained = r.params;
    telemetry = std::move(r.telemetry);
    out << "collected " << r.groups_collected << " groups over " << c.iterations << " iterations, " << r.steps
        << " steps, " << demos.size() << " demonstrations\n";
  }
  save_policy(out_dir / "policy.json", trained);
  write_telemetry_csv(out_dir / "telemetry.csv", telemetry);
  if (!telemetry.empty()) {
    const auto& last = telemetry.back();
    out << "final probe distribution: eval " << last.probe_distribution[0] << ", create "
        << last.probe_distribution[1] << ", defer " << last.probe_distribution[2] << "\n";
  }
  out << "run directory: " << out_dir.string() << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const SweepAxis axis = parse_sweep_axis(c.axis);
  const auto values = parse_value_list(c.values);
  const auto seeds = parse_seed_list(c.seeds);
  const auto tasks = load_task_list(c);
  if (c.agent_backend != "synthetic") throw ConfigError("sweeps run on synthetic backends");
  SweepBase base;
  base.episode = episode_config(c);
  base.setup = synthetic_setup(c);
  base.training = {base.episode, reward_config(c), trainer_config(c), c.iterations};
  base.parallelism = c.parallelism;
  if (!c.policy_file.empty()) base.policy = std::make_shared<ParametricPolicy>(load_policy(c.policy_file));
  fs::create_directories(out_dir);
  write_resolved_config(out_dir, c, "sweep");
  const auto rows = sweep(axis, values, seeds, tasks, base);
  write_sweep_csv(out_dir / "sweep.csv", rows);
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.error && r.seed) {
      ++failed;
      err << "cell " << to_string(axis) << "=" << r.value << " seed " << *r.seed << " failed: " << *r.error << "\n";
    }
  }
  out << "wrote " << rows.size() << " rows to " << (out_dir / "sweep.csv").string() << "\n";
  return failed ? 1 : 0;
}

int cmd_export(const RunConfig& c, const fs::path& out_path, std::ostream& out) {
  fs::path demos = c.demos;
  if (demos.empty()) {
    if (c.run_dir.empty()) throw ConfigError("--demos or --run-dir is required");
    demos = fs::path(c.run_dir) / "demos.jsonl";
  }
  std::optional<ExpertLevel> level;
  if (!c.level.empty()) level = parse_expert_level(c.level);
  std::vector<Demonstration> records;
  if (fs::exists(demos)) records = DemonstrationStore(demos).snapshot();
  const std::size_t n = export_sft(records, out_path, level);
  out << "exported " << n << " record(s) to " << out_path.string() << "\n";
  return 0;
}

int cmd_serve(const RunConfig& c, std::ostream& out) {
  const fs::path queue_path = c.queue.empty() ? fs::path("runs/pending.json") : fs::path(c.queue);
  PendingQueue queue(queue_path);
  GuidanceStore guidance;
  std::optional<fs::path> episodes_dir;
  if (!c.run_dir.empty()) episodes_dir = fs::path(c.run_dir) / "episodes";
  EpisodeRegistry registry(episodes_dir);
  std::optional<std::set<std::string>> known;
  if (!c.tasks.empty()) {
    known.emplace();
    for (const auto& t : load_tasks(c.tasks)) known->insert(t.id);
  }
  Service service(ServiceContext{queue, guidance, registry, known});
  const int port = service.start(c.host, c.port);
  out << "service listening on " << c.host << ":" << port << "\n" << std::flush;
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  out << "service stopped; queue saved to " << queue_path.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  if (c.run_dir.empty()) throw ConfigError("--run-dir is required");
  const fs::path dir = fs::path(c.run_dir) / "episodes";
  if (!fs::is_directory(dir)) throw std::runtime_error("no episodes directory in " + c.run_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.path().extension() == ".json" && name.find(".pending.") == std::string::npos) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EpisodeResult> episodes;
  for (const auto& f : files) episodes.push_back(read_json_file(f).get<EpisodeResult>());
  if (episodes.empty()) throw std::runtime_error("no completed episodes in " + c.run_dir);
  const RunSummary s = summarize(episodes);
  json j = {{"episodes", s.episodes},
            {"judged", s.judged},
            {"accuracy", s.accuracy},
            {"actions", s.actions},
            {"defer_rate", s.defer_rate},
            {"avg_tokens", {{"input", s.avg_input_tokens}, {"output", s.avg_output_tokens}, {"total", s.avg_total_tokens}}},
            {"expert_calls", s.expert_calls}};
  j["distribution"] = s.distribution ? json(*s.distribution) : json(nullptr);
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  auto parse_one = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
      throw std::invalid_argument("bad seed '" + std::string(s) + "'");
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  if (auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto lo = parse_one(text.substr(0, dots)), hi = parse_one(text.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("seed range runs backwards: " + std::string(text));
    if (hi - lo >= 100000) throw std::invalid_argument("seed range too large: " + std::string(text));
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    out.push_back(parse_one(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_value_list(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string item(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size() || !std::isfinite(v)) throw std::invalid_argument("bad value '" + item + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent collaboration with learned deferral to an expert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hila 0.1.0");

  std::string config_file;
  std::string out_dir;
  json overrides = json::object();
  struct Sub {
    const char* name;
    const char* help;
    CLI::App* app = nullptr;
  };
  std::vector<Sub> subs = {{"run", "execute episodes over a task file"},
                           {"train", "collect grouped rollouts and optimize the policy"},
                           {"sweep", "sweep agents, rounds or the deferral cost"},
                           {"export-sft", "export demonstrations as supervised fine-tuning data"},
                           {"serve", "serve the expert HTTP API"},
                           {"eval", "summarize an existing run directory"}};
  for (auto& s : subs) {
    s.app = app.add_subcommand(s.name, s.help);
    s.app->add_option("--config", config_file, "JSON config file; flags override its values");
    if (std::string_view(s.name) != "serve" && std::string_view(s.name) != "eval") {
      s.app->add_option("--out", out_dir, std::string_view(s.name) == "export-sft" ? "output JSONL file"
                                                                                   : "output directory");
    }
    add_config_options(s.app, overrides);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig c = resolve_config(config_file, overrides);
    if (subs[0].app->parsed()) return cmd_run(c, out_dir.empty() ? default_out_dir() : out_dir, out, err);
    if (subs[1].app->parsed()) return cmd_train(c, out_dir.empty() ? default_out_dir() : out_dir, out);
    if (subs[2].app->parsed()) return cmd_sweep(c, out_dir.empty() ? default_out_dir() : out_dir, out, err);
    if (subs[3].app->parsed()) {
      if (out_dir.empty()) throw ConfigError("--out is required for export-sft");
      return cmd_export(c, out_dir, out);
    }
    if (subs[4].app->parsed()) return cmd_serve(c, out);
    if (subs[5].app->parsed()) return cmd_eval(c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hila
