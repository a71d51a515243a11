#include "hila/json_io.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace hila {

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

StrategicAction parse_action_text(const std::string& text) {
  return parse_action_line(text, std::numeric_limits<std::size_t>::max());
}

}  // namespace

void to_json(json& j, const TokenCounts& t) { j = {{"input", t.input}, {"output", t.output}, {"total", t.total()}}; }

void from_json(const json& j, TokenCounts& t) {
  t.input = j.at("input").get<std::int64_t>();
  t.output = j.at("output").get<std::int64_t>();
}

void to_json(json& j, const ActionCounts& c) { j = {{"eval", c.eval}, {"create", c.create}, {"defer", c.defer}}; }

void from_json(const json& j, ActionCounts& c) {
  c.eval = j.at("eval").get<std::int64_t>();
  c.create = j.at("create").get<std::int64_t>();
  c.defer = j.at("defer").get<std::int64_t>();
}

void to_json(json& j, const TaskInstance& t) {
  j = {{"id", t.id}, {"kind", to_string(t.kind)}, {"prompt", t.prompt}};
  if (t.gold) j["gold"] = *t.gold;
  if (!t.choices.empty()) j["choices"] = t.choices;
  if (t.difficulty) j["difficulty"] = *t.difficulty;
}

void from_json(const json& j, TaskInstance& t) {
  t.id = j.at("id").get<std::string>();
  t.kind = parse_task_kind(j.at("kind").get<std::string>());
  t.prompt = j.at("prompt").get<std::string>();
  t.gold.reset();
  if (auto it = j.find("gold"); it != j.end() && !it->is_null()) {
    if (it->is_number()) {
      auto c = canonicalize_number(it->dump());
      if (!c) throw std::invalid_argument("task " + t.id + ": numeric gold is not a plain number");
      t.gold = *c;
    } else {
      // Graded against normalized answers, so normalize the gold the same way.
      const auto raw = it->get<std::string>();
      t.gold = normalize_answer(raw, t.kind).value_or(raw);
    }
  }
  t.choices = j.value("choices", std::vector<std::string>{});
  t.difficulty = get_opt<double>(j, "difficulty");
  t.validate();
}

void to_json(json& j, const AgentTurn& t) {
  j = {{"action", t.action ? json(t.action->serialize()) : json(nullptr)},
       {"raw_output", t.raw_output},
       {"normalized_answer", opt(t.normalized_answer)},
       {"source", to_string(t.source)},
       {"tokens", t.tokens}};
}

void from_json(const json& j, AgentTurn& t) {
  auto a = get_opt<std::string>(j, "action");
  t.action = a ? std::optional(parse_action_text(*a)) : std::nullopt;
  t.raw_output = j.at("raw_output").get<std::string>();
  t.normalized_answer = get_opt<std::string>(j, "normalized_answer");
  t.source = parse_output_source(j.at("source").get<std::string>());
  t.tokens = j.at("tokens").get<TokenCounts>();
}

void to_json(json& j, const RoundRecord& r) { j = {{"round_index", r.round_index}, {"agents", r.agents}}; }

void from_json(const json& j, RoundRecord& r) {
  r.round_index = j.at("round_index").get<int>();
  r.agents = j.at("agents").get<std::vector<AgentTurn>>();
}

void to_json(json& j, const EpisodeResult& e) {
  j = {{"task_id", e.task_id},
       {"seed", e.seed},
       {"final_answer", e.final_answer},
       {"correct", opt(e.correct)},
       {"actions", e.actions},
       {"tokens", e.tokens},
       {"expert_calls", e.expert_calls},
       {"expert_tokens", e.expert_tokens},
       {"rounds", e.rounds}};
}

void from_json(const json& j, EpisodeResult& e) {
  e.task_id = j.at("task_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.final_answer = j.at("final_answer").get<std::string>();
  e.correct = get_opt<bool>(j, "correct");
  e.actions = j.at("actions").get<ActionCounts>();
  e.tokens = j.at("tokens").get<TokenCounts>();
  e.expert_calls = j.at("expert_calls").get<std::int64_t>();
  e.expert_tokens = j.at("expert_tokens").get<TokenCounts>();
  e.rounds = j.at("rounds").get<std::vector<RoundRecord>>();
}

void to_json(json& j, const PolicyParams& p) {
  j = {{"schema", "hila-policy-v1"},
       {"d", kFeatureDim},
       {"weights", p.weights},
       {"biases", p.biases},
       {"temperature", p.temperature}};
}

void from_json(const json& j, PolicyParams& p) {
  if (j.at("schema").get<std::string>() != "hila-policy-v1") throw std::invalid_argument("unknown policy schema");
  if (j.at("d").get<std::size_t>() != kFeatureDim) throw std::invalid_argument("policy feature dimension mismatch");
  const auto w = j.at("weights").get<std::vector<double>>();
  const auto b = j.at("biases").get<std::vector<double>>();
  if (w.size() != p.weights.size() || b.size() != p.biases.size()) {
    throw std::invalid_argument("policy weights/biases have the wrong length");
  }
  std::copy(w.begin(), w.end(), p.weights.begin());
  std::copy(b.begin(), b.end(), p.biases.begin());
  p.temperature = j.at("temperature").get<double>();
  p.validate();
}

void to_json(json& j, const GroupSample& s) {
  std::vector<std::string> actions;
  for (auto a : s.actions) actions.emplace_back(to_string(a));
  j = {{"features", s.features}, {"actions", actions},       {"rewards", s.rewards},
       {"behavior_probs", s.behavior_probs}, {"task_id", s.task_id}, {"round", s.round}};
  if (s.defer_demo_tokens) j["defer_demo_tokens"] = *s.defer_demo_tokens;
}

void from_json(const json& j, GroupSample& s) {
  const auto f = j.at("features").get<std::vector<double>>();
  const auto a = j.at("actions").get<std::vector<std::string>>();
  const auto r = j.at("rewards").get<std::vector<double>>();
  const auto b = j.at("behavior_probs").get<std::vector<double>>();
  if (f.size() != kFeatureDim) throw std::invalid_argument("group features must have length 10");
  if (a.size() != kNumActionTypes || r.size() != kNumActionTypes || b.size() != kNumActionTypes) {
    throw std::invalid_argument("a group holds exactly one entry per action type");
  }
  std::copy(f.begin(), f.end(), s.features.begin());
  for (std::size_t k = 0; k < kNumActionTypes; ++k) {
    s.actions[k] = parse_action_type(a[k]);
    s.rewards[k] = r[k];
    s.behavior_probs[k] = b[k];
  }
  s.task_id = j.at("task_id").get<std::string>();
  s.round = j.at("round").get<int>();
  s.defer_demo_tokens = get_opt<std::vector<std::string>>(j, "defer_demo_tokens");
  s.advantages = {};
}

void to_json(json& j, const PendingRequest& r) {
  j = {{"id", r.id},
       {"task_id", r.task_id},
       {"round", r.round},
       {"task_prompt", r.task_prompt},
       {"state_summary", r.state_summary},
       {"level", to_string(r.level)},
       {"created_at", r.created_at_ms},
       {"status", to_string(r.status)},
       {"response", opt(r.response)},
       {"response_level", r.response_level ? json(to_string(*r.response_level)) : json(nullptr)},
       {"consumed", r.consumed}};
}

void from_json(const json& j, PendingRequest& r) {
  r.id = j.at("id").get<std::string>();
  r.task_id = j.at("task_id").get<std::string>();
  r.round = j.at("round").get<int>();
  r.task_prompt = j.at("task_prompt").get<std::string>();
  r.state_summary = j.at("state_summary").get<std::string>();
  r.level = parse_expert_level(j.at("level").get<std::string>());
  r.created_at_ms = j.at("created_at").get<std::int64_t>();
  r.status = parse_request_status(j.at("status").get<std::string>());
  r.response = get_opt<std::string>(j, "response");
  auto lvl = get_opt<std::string>(j, "response_level");
  r.response_level = lvl ? std::optional(parse_expert_level(*lvl)) : std::nullopt;
  r.consumed = j.value("consumed", false);
}

void to_json(json& j, const Demonstration& d) {
  j = {{"task_id", d.task_id},
       {"state_snapshot", d.state_snapshot},
       {"level", to_string(d.level)},
       {"text", d.text},
       {"normalized_answer", opt(d.normalized_answer)},
       {"source", d.source},
       {"timestamp", d.timestamp},
       {"round_index", d.round_index},
       {"agent", d.agent},
       {"episode_seed", d.episode_seed}};
}

void from_json(const json& j, Demonstration& d) {
  d.task_id = j.at("task_id").get<std::string>();
  d.state_snapshot = j.at("state_snapshot").get<std::string>();
  d.level = parse_expert_level(j.at("level").get<std::string>());
  d.text = j.at("text").get<std::string>();
  d.normalized_answer = get_opt<std::string>(j, "normalized_answer");
  d.source = j.at("source").get<std::string>();
  d.timestamp = j.at("timestamp").get<std::int64_t>();
  d.round_index = j.at("round_index").get<int>();
  d.agent = j.at("agent").get<std::size_t>();
  d.episode_seed = j.at("episode_seed").get<std::uint64_t>();
}

void to_json(json& j, const CompetenceModel& m) { j = {{"families", m.families}, {"eta", m.eta}}; }

void from_json(const json& j, CompetenceModel& m) {
  m.families = j.at("families").get<std::map<std::string, double>>();
  m.eta = j.at("eta").get<double>();
  m.validate();
}

void to_json(json& j, const Guidance& g) { j = {{"level", to_string(g.level)}, {"text", g.text}}; }

void from_json(const json& j, Guidance& g) {
  g.level = parse_expert_level(j.at("level").get<std::string>());
  g.text = j.at("text").get<std::string>();
}

// ---------------------------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, std::span<const json> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << "\n";
}

std::vector<TaskInstance> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open task file " + path.string());
  std::vector<TaskInstance> tasks;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(n) + ": ";
    try {
      auto t = json::parse(line).get<TaskInstance>();
      if (!seen.insert(t.id).second) throw DataError("duplicate task id " + t.id);
      tasks.push_back(std::move(t));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    } catch (const std::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return tasks;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << value.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

PolicyParams load_policy(const std::filesystem::path& path) {
  try {
    return read_json_file(path).get<PolicyParams>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params) { write_json_file(path, params); }

std::vector<GroupSample> load_groups(const std::filesystem::path& path, bool normalize_advantages) {
  std::vector<GroupSample> out;
  std::size_t n = 0;
  for (const auto& row : read_jsonl(path)) {
    ++n;
    try {
      auto s = row.get<GroupSample>();
      s.set_advantages(normalize_advantages);
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_groups(const std::filesystem::path& path, std::span<const GroupSample> groups) {
  std::vector<json> rows(groups.begin(), groups.end());
  write_jsonl(path, rows);
}

}  // namespace hila
