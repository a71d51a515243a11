#include "hila/backends.hpp"

#include <algorithm>
#include <cmath>

#include "hila/rng.hpp"

namespace hila {

namespace {

constexpr std::string_view kFillerWords[] = {"Let",  "us",   "reason", "through", "the",  "problem",    "step",
                                             "by",   "step", "and",    "check",   "each", "carefully.", "Then"};

constexpr std::string_view kIdeaText =
    "Idea: identify the key quantities first, set up the relationship between them, and double-check the final "
    "computation before committing to an answer.";

std::string answer_part(TaskKind kind, const std::string& answer) {
  switch (kind) {
    case TaskKind::MathNumeric: return answer;
    case TaskKind::MathBoxed: return "The final answer is \\boxed{" + answer + "}.";
    case TaskKind::MultipleChoice: return "Answer: " + answer;
    case TaskKind::Code: return "```python\n" + answer + "\n```";
    case TaskKind::Generic: return answer;
  }
  return answer;
}

const std::string& require_gold(const TaskInstance& task) {
  if (!task.gold) throw BackendError("task " + task.id + " has no gold answer; synthetic backends need one");
  return *task.gold;
}

}  // namespace

std::string task_family(const TaskInstance& task) { return std::string(to_string(task.kind)); }

double SyntheticAgentSpec::competence_for(const TaskInstance& task) const {
  if (auto it = family_competence.find(task_family(task)); it != family_competence.end()) return it->second;
  std::size_t band = 0;
  if (task.difficulty && competence.size() > 1) {
    band = std::min(competence.size() - 1,
                    static_cast<std::size_t>(std::floor(*task.difficulty * static_cast<double>(competence.size()))));
  }
  return competence.at(band);
}

void SyntheticAgentSpec::validate() const {
  if (competence.empty()) throw std::invalid_argument("synthetic agent needs at least one competence band");
  auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!std::all_of(competence.begin(), competence.end(), in01)) {
    throw std::invalid_argument("synthetic agent competence must lie in [0,1]");
  }
  for (const auto& [family, p] : family_competence) {
    if (!in01(p)) throw std::invalid_argument("competence for family " + family + " outside [0,1]");
  }
  if (distractors == 0) throw std::invalid_argument("synthetic agent needs at least one distractor");
}

std::vector<std::string> distractor_pool(const TaskInstance& task, std::size_t count) {
  const std::string& gold = require_gold(task);
  std::vector<std::string> pool;
  if (task.kind == TaskKind::MultipleChoice) {
    for (const auto& c : task.choices) {
      if (c != gold && pool.size() < count) pool.push_back(c);
    }
    return pool;
  }
  const bool numeric = canonicalize_number(gold).has_value() &&
                       (task.kind == TaskKind::MathNumeric || task.kind == TaskKind::MathBoxed);
  for (std::size_t k = 1; pool.size() < count; ++k) {
    std::string d;
    if (numeric) {
      const auto dot = gold.find('.');
      const long long int_part = std::stoll(gold.substr(0, dot));
      std::string frac = dot == std::string::npos ? "" : gold.substr(dot);
      d = *canonicalize_number(std::to_string(int_part + static_cast<long long>(k)) + frac);
    } else if (task.kind == TaskKind::Code) {
      d = gold + "\nraise NotImplementedError  # variant " + std::to_string(k);
    } else if (task.kind == TaskKind::MathBoxed) {
      d = gold + " + " + std::to_string(k);
    } else {
      d = gold + " (variant " + std::to_string(k) + ")";
    }
    if (d != gold) pool.push_back(std::move(d));
  }
  return pool;
}

std::string format_solution(const TaskInstance& task, const std::string& answer, std::size_t verbosity) {
  const std::string tail = answer_part(task.kind, answer);
  const std::size_t tail_tokens = count_tokens(tail);
  if (verbosity <= tail_tokens) return tail;
  std::string out;
  const std::size_t filler = verbosity - tail_tokens;
  for (std::size_t i = 0; i < filler; ++i) {
    if (i) out.push_back(' ');
    out.append(kFillerWords[i % std::size(kFillerWords)]);
  }
  out.push_back('\n');
  out.append(tail);
  return out;
}

Generation synthetic_generate(const SyntheticAgentSpec& spec, const TaskInstance& task, std::uint64_t seed) {
  const std::string& gold = require_gold(task);
  Rng rng(seed);
  const bool correct = rng.bernoulli(spec.competence_for(task));
  std::string answer;
  if (correct) {
    answer = gold;
  } else {
    const auto pool = distractor_pool(task, spec.distractors);
    answer = pool[rng.below(pool.size())];
  }
  Generation g;
  g.text = format_solution(task, answer, spec.verbosity);
  g.tokens.output = static_cast<std::int64_t>(count_tokens(g.text));
  return g;
}

Generation SyntheticAgent::generate(const GenerationRequest& request) {
  Generation g = synthetic_generate(spec_, request.task, request.seed);
  g.tokens.input = static_cast<std::int64_t>(count_tokens(request.prompt));
  return g;
}

ScriptedAgent& ScriptedAgent::set(int round, std::size_t agent, std::string output) {
  std::lock_guard lock(mu_);
  outputs_.insert_or_assign({round, agent}, std::move(output));
  return *this;
}

Generation ScriptedAgent::generate(const GenerationRequest& request) {
  std::lock_guard lock(mu_);
  ++calls_;
  auto it = outputs_.find({request.round, request.agent});
  if (it == outputs_.end()) {
    throw BackendError("no scripted output for round " + std::to_string(request.round) + ", agent " +
                       std::to_string(request.agent));
  }
  return {it->second,
          {static_cast<std::int64_t>(count_tokens(request.prompt)), static_cast<std::int64_t>(count_tokens(it->second))}};
}

std::size_t ScriptedAgent::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

Generation RemoteAgent::generate(const GenerationRequest& request) {
  ChatResult r = client_->complete_prompt(request.prompt);
  Generation g{std::move(r.content), r.usage};
  if (g.tokens.input == 0 && g.tokens.output == 0) {
    g.tokens = {static_cast<std::int64_t>(count_tokens(request.prompt)), static_cast<std::int64_t>(count_tokens(g.text))};
  }
  return g;
}

// ---------------------------------------------------------------------------

ExpertReply OracleExpert::respond(const ExpertRequest& request) {
  const std::string& gold = require_gold(request.task);
  ExpertReply r;
  r.level = request.level;
  r.text = request.level == ExpertLevel::Idea ? std::string(kIdeaText) : format_solution(request.task, gold, verbosity_);
  r.tokens.output = static_cast<std::int64_t>(count_tokens(r.text));
  return r;
}

NoisyExpert::NoisyExpert(double reliability, std::size_t verbosity) : reliability_(reliability), verbosity_(verbosity) {
  if (!(reliability >= 0.0 && reliability <= 1.0)) throw std::invalid_argument("expert reliability must lie in [0,1]");
}

ExpertReply NoisyExpert::respond(const ExpertRequest& request) {
  const std::string& gold = require_gold(request.task);
  ExpertReply r;
  r.level = request.level;
  if (request.level == ExpertLevel::Idea) {
    r.text = std::string(kIdeaText);
  } else {
    Rng rng(request.seed);
    std::string answer = gold;
    if (!rng.bernoulli(reliability_)) {
      const auto pool = distractor_pool(request.task, 3);
      answer = pool[rng.below(pool.size())];
    }
    r.text = format_solution(request.task, answer, verbosity_);
  }
  r.tokens.output = static_cast<std::int64_t>(count_tokens(r.text));
  return r;
}

std::string RemoteProxyExpert::render_request(const ExpertRequest& request) {
  std::string text = request.prompt;
  text += "\n\nCurrent candidate answers from the agents: ";
  text += request.state_summary;
  if (request.level == ExpertLevel::Idea) {
    text += "\n\nGive only a brief high-level idea for solving the problem, not a full solution.";
  }
  return text;
}

ExpertReply RemoteProxyExpert::respond(const ExpertRequest& request) {
  ChatResult r = client_->complete_prompt(render_request(request));
  return {std::move(r.content), request.level, r.usage};
}

ExpertReply HumanConsoleExpert::respond(const ExpertRequest& request) {
  const std::string id =
      queue_.enqueue(request.task.id, request.round, request.prompt, request.state_summary, request.level);
  auto answered = queue_.await_response(id, timeout_);
  if (!answered || !answered->response) {
    throw ExpertTimeout(id, "no human response for request " + id + " (task " + request.task.id + ")");
  }
  ExpertReply r;
  r.text = *answered->response;
  r.level = answered->response_level.value_or(request.level);
  r.tokens.output = static_cast<std::int64_t>(count_tokens(r.text));
  return r;
}

std::string summarize_candidates(std::span<const std::optional<std::string>> answers) {
  std::string out;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (i) out += "; ";
    out += "Agent " + std::to_string(i) + ": " + (answers[i] ? *answers[i] : std::string("(no answer)"));
  }
  return out;
}

}  // namespace hila
