#include "hila/meta_policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "hila/rng.hpp"

namespace hila {

PolicyParams::Vector PolicyParams::flatten() const {
  Vector v{};
  std::copy(weights.begin(), weights.end(), v.begin());
  std::copy(biases.begin(), biases.end(), v.begin() + kWeights);
  return v;
}

PolicyParams PolicyParams::unflatten(const Vector& v, double temperature) {
  PolicyParams p;
  std::copy(v.begin(), v.begin() + kWeights, p.weights.begin());
  std::copy(v.begin() + kWeights, v.end(), p.biases.begin());
  p.temperature = temperature;
  return p;
}

void PolicyParams::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(weights.begin(), weights.end(), finite) || !std::all_of(biases.begin(), biases.end(), finite)) {
    throw std::invalid_argument("policy parameters must be finite");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("policy temperature must be a positive finite number");
  }
}

ActionProbs softmax(const ActionProbs& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  ActionProbs p{};
  double z = 0.0;
  for (std::size_t a = 0; a < kNumActionTypes; ++a) {
    p[a] = std::exp(logits[a] - m);
    z += p[a];
  }
  for (auto& x : p) x /= z;
  return p;
}

namespace {

ActionProbs logits_of(const PolicyParams& params, const FeatureVector& features) {
  for (double f : features) {
    if (!std::isfinite(f)) throw std::invalid_argument("policy features must be finite");
  }
  ActionProbs z{};
  for (std::size_t a = 0; a < kNumActionTypes; ++a) {
    double s = params.biases[a];
    for (std::size_t j = 0; j < kFeatureDim; ++j) s += params.weights[a * kFeatureDim + j] * features[j];
    z[a] = s / params.temperature;
  }
  return z;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

ActionDistribution action_distribution(const PolicyParams& params, const FeatureVector& features) {
  return {softmax(logits_of(params, features)), std::nullopt};
}

std::size_t resolve_eval_target(std::span<const std::optional<std::string>> peer_answers) {
  if (peer_answers.empty()) throw std::invalid_argument("resolve_eval_target needs at least one peer");
  std::size_t best = 0, best_count = 0;
  for (std::size_t i = 0; i < peer_answers.size(); ++i) {
    if (!peer_answers[i]) continue;
    std::size_t count = 0;
    for (const auto& other : peer_answers) count += (other && *other == *peer_answers[i]) ? 1 : 0;
    if (count > best_count) {
      best = i;
      best_count = count;
    }
  }
  return best;
}

StrategicAction parse_action_line(std::string_view text, std::size_t num_agents) {
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (line == "DEFER") return StrategicAction::defer();
    if (line == "CREATE") return StrategicAction::create();
    if (line.size() > 4 && line.starts_with("EVAL") && std::isspace(static_cast<unsigned char>(line[4]))) {
      std::string_view arg = trim(line.substr(4));
      bool negative = false;
      if (!arg.empty() && arg.front() == '-') {
        negative = true;
        arg.remove_prefix(1);
      }
      const bool digits = !arg.empty() && std::all_of(arg.begin(), arg.end(), [](char c) { return c >= '0' && c <= '9'; });
      if (digits) {
        std::size_t idx = 0;
        bool overflow = false;
        for (char c : arg) {
          if (idx > (std::numeric_limits<std::size_t>::max() - 9) / 10) overflow = true;
          else idx = idx * 10 + static_cast<std::size_t>(c - '0');
        }
        if (negative || overflow || idx >= num_agents) {
          throw ActionParseError(ActionParseError::Reason::IndexOutOfRange, std::string(text),
                                 "EVAL index out of range in action line '" + std::string(line) + "' (agents: " +
                                     std::to_string(num_agents) + ")");
        }
        return StrategicAction::eval(idx);
      }
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  throw ActionParseError(ActionParseError::Reason::NoActionLine, std::string(text),
                         "no action line found in: " + std::string(text));
}

LogProbGrad log_prob_and_grad(const PolicyParams& params, const FeatureVector& features, ActionType action) {
  const ActionProbs z = logits_of(params, features);
  const ActionProbs p = softmax(z);
  const double m = *std::max_element(z.begin(), z.end());
  double lse = 0.0;
  for (double zi : z) lse += std::exp(zi - m);
  lse = m + std::log(lse);

  LogProbGrad out;
  const auto k = static_cast<std::size_t>(action);
  out.log_prob = z[k] - lse;
  for (std::size_t a = 0; a < kNumActionTypes; ++a) {
    const double coeff = ((a == k ? 1.0 : 0.0) - p[a]) / params.temperature;
    for (std::size_t j = 0; j < kFeatureDim; ++j) out.grad[a * kFeatureDim + j] = coeff * features[j];
    out.grad[PolicyParams::kWeights + a] = coeff;
  }
  return out;
}

std::size_t eval_target_for(std::size_t agent, std::span<const std::optional<std::string>> answers) {
  if (answers.size() <= 1) return agent;
  std::vector<std::optional<std::string>> peers;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (i == agent) continue;
    peers.push_back(answers[i]);
    ids.push_back(i);
  }
  return ids[resolve_eval_target(peers)];
}

Decision ParametricPolicy::decide(const DecisionContext& ctx) const {
  const auto probs = *probabilities(ctx);
  Rng rng(ctx.seed);
  const double u = rng.uniform();
  double acc = 0.0;
  ActionType chosen = ActionType::Defer;
  for (std::size_t a = 0; a < kNumActionTypes; ++a) {
    acc += probs[a];
    if (u < acc) {
      chosen = kAllActionTypes[a];
      break;
    }
  }
  switch (chosen) {
    case ActionType::Eval: return {StrategicAction::eval(eval_target_for(ctx.agent, ctx.answers)), {}};
    case ActionType::Create: return {StrategicAction::create(), {}};
    case ActionType::Defer: return {StrategicAction::defer(), {}};
  }
  return {};
}

std::optional<ActionProbs> ParametricPolicy::probabilities(const DecisionContext& ctx) const {
  return action_distribution(params_, ctx.state.features()).probs;
}

ScriptedPolicy& ScriptedPolicy::set(int round, std::size_t agent, StrategicAction action) {
  script_.insert_or_assign({round, agent}, action);
  return *this;
}

Decision ScriptedPolicy::decide(const DecisionContext& ctx) const {
  auto it = script_.find({ctx.round, ctx.agent});
  return {it == script_.end() ? fallback_ : it->second, {}};
}

Decision LlmPromptedPolicy::decide(const DecisionContext& ctx) const {
  Decision d;
  for (int attempt = 0; attempt < std::max(1, max_attempts_); ++attempt) {
    auto [reply, usage] = complete_(ctx.prompt);
    d.tokens += usage;
    try {
      d.action = parse_action_line(reply, ctx.num_agents);
      return d;
    } catch (const ActionParseError&) {
    }
  }
  d.action = StrategicAction::create();
  return d;
}

}  // namespace hila
