#include "hila/outer_loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "hila/json_io.hpp"
#include "hila/rng.hpp"

namespace hila {

std::string_view to_string(ExpertLevel level) { return level == ExpertLevel::Idea ? "idea" : "reasoning"; }

ExpertLevel parse_expert_level(std::string_view text) {
  if (text == "idea") return ExpertLevel::Idea;
  if (text == "reasoning") return ExpertLevel::Reasoning;
  throw std::invalid_argument("unknown expert level: " + std::string(text));
}

// ---------------------------------------------------------------------------

DemonstrationStore::DemonstrationStore(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (path_ && std::filesystem::exists(*path_)) {
    for (const auto& row : read_jsonl(*path_)) {
      demos_.push_back(row.get<Demonstration>());
      next_timestamp_ = std::max(next_timestamp_, demos_.back().timestamp + 1);
    }
  }
}

bool DemonstrationStore::append(Demonstration demo) {
  std::lock_guard lock(mu_);
  for (const auto& d : demos_) {
    if (d.task_id == demo.task_id && d.round_index == demo.round_index && d.agent == demo.agent &&
        d.episode_seed == demo.episode_seed) {
      return false;
    }
  }
  demo.timestamp = next_timestamp_++;
  if (path_) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to demonstration store " + path_->string());
    out << json(demo).dump() << "\n";
    if (!out) throw std::runtime_error("write failed for demonstration store " + path_->string());
  }
  demos_.push_back(std::move(demo));
  return true;
}

std::vector<Demonstration> DemonstrationStore::snapshot() const {
  std::lock_guard lock(mu_);
  return demos_;
}

std::size_t DemonstrationStore::size() const {
  std::lock_guard lock(mu_);
  return demos_.size();
}

Demonstration make_demonstration(const DeferEvent& event) {
  Demonstration d;
  d.task_id = event.task.id;
  d.state_snapshot = event.state_snapshot;
  d.level = event.reply.level;
  d.text = event.reply.text;
  d.normalized_answer = normalize_answer(event.reply.text, event.task.kind);
  d.source = event.expert_kind;
  d.round_index = event.round;
  d.agent = event.trigger_agent;
  d.episode_seed = event.episode_seed;
  return d;
}

bool record_demonstration(DemonstrationStore& store, const DeferEvent& event) {
  return store.append(make_demonstration(event));
}

// ---------------------------------------------------------------------------

UniformTokenModel::UniformTokenModel(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
  if (vocab_.empty()) throw std::invalid_argument("token model needs a nonempty vocabulary");
}

std::vector<double> UniformTokenModel::log_probs(const std::string&, std::span<const std::string> tokens) const {
  const double lp = -std::log(static_cast<double>(vocab_.size()));
  std::vector<double> out;
  for (const auto& t : tokens) {
    const bool known = std::find(vocab_.begin(), vocab_.end(), t) != vocab_.end();
    out.push_back(known ? lp : -std::numeric_limits<double>::infinity());
  }
  return out;
}

CategoricalTokenModel::CategoricalTokenModel(std::vector<std::string> vocabulary, std::vector<double> logits)
    : vocab_(std::move(vocabulary)), logits_(std::move(logits)) {
  if (vocab_.empty()) throw std::invalid_argument("token model needs a nonempty vocabulary");
  if (logits_.size() != vocab_.size()) throw std::invalid_argument("one logit per vocabulary entry");
}

CategoricalTokenModel::CategoricalTokenModel(std::vector<std::string> vocabulary)
    : CategoricalTokenModel(vocabulary, std::vector<double>(vocabulary.size(), 0.0)) {}

std::size_t CategoricalTokenModel::index_of(const std::string& token) const {
  auto it = std::find(vocab_.begin(), vocab_.end(), token);
  return it == vocab_.end() ? vocab_.size() : static_cast<std::size_t>(it - vocab_.begin());
}

std::vector<double> CategoricalTokenModel::probabilities() const {
  const double m = *std::max_element(logits_.begin(), logits_.end());
  std::vector<double> p(logits_.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits_[i] - m);
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> CategoricalTokenModel::log_probs(const std::string&, std::span<const std::string> tokens) const {
  const auto p = probabilities();
  std::vector<double> out;
  for (const auto& t : tokens) {
    const std::size_t i = index_of(t);
    out.push_back(i < p.size() ? std::log(p[i]) : -std::numeric_limits<double>::infinity());
  }
  return out;
}

std::vector<double> CategoricalTokenModel::nll_grad(std::span<const std::string> tokens) const {
  const auto p = probabilities();
  std::vector<double> g(p.size(), 0.0);
  for (const auto& t : tokens) {
    const std::size_t i = index_of(t);
    if (i >= p.size()) throw OutOfSupportError(0, t);
    for (std::size_t k = 0; k < p.size(); ++k) g[k] += p[k];
    g[i] -= 1.0;
  }
  return g;
}

double sft_loss(const TokenModel& model, const std::string& context, std::span<const std::string> tokens) {
  const auto lp = model.log_probs(context, tokens);
  double loss = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (!std::isfinite(lp[i])) throw OutOfSupportError(i, tokens[i]);
    loss -= lp[i];
  }
  return loss;
}

double total_loss(double inner, std::span<const double> sft_losses, std::span<const ActionType> actions,
                  double lambda_sft) {
  if (sft_losses.size() != actions.size()) throw std::invalid_argument("one SFT entry per action");
  if (actions.empty()) return inner;
  double sum = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] == ActionType::Defer) sum += sft_losses[i];
  }
  return inner + lambda_sft * sum / static_cast<double>(actions.size());
}

JointLossAndGrad joint_loss_and_grad(const PolicyParams& params, const PolicyParams& reference,
                                     std::span<const GroupSample> batch, const TrainerConfig& config,
                                     const CategoricalTokenModel& model, double lambda_sft) {
  JointLossAndGrad out;
  const LossAndGrad inner = inner_loss_and_grad(params, reference, batch, config);
  out.inner = inner.loss;
  out.policy_grad = inner.grad;
  out.token_grad.assign(model.vocabulary().size(), 0.0);

  std::vector<double> sft;
  std::vector<ActionType> actions;
  const double pairs = static_cast<double>(batch.size() * kNumActionTypes);
  std::size_t defers = 0;
  double sft_sum = 0.0;
  for (const auto& s : batch) {
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      actions.push_back(s.actions[k]);
      double l = 0.0;
      if (s.actions[k] == ActionType::Defer && s.defer_demo_tokens) {
        l = sft_loss(model, s.task_id, *s.defer_demo_tokens);
        const auto g = model.nll_grad(*s.defer_demo_tokens);
        for (std::size_t i = 0; i < g.size(); ++i) out.token_grad[i] += lambda_sft * g[i] / pairs;
        ++defers;
        sft_sum += l;
      }
      sft.push_back(l);
    }
  }
  out.mean_sft = defers ? sft_sum / static_cast<double>(defers) : 0.0;
  out.total = total_loss(inner.loss.inner, sft, actions, lambda_sft);
  return out;
}

std::string_view to_string(JointSchedule s) { return s == JointSchedule::Interleaved ? "interleaved" : "staged"; }

JointSchedule parse_joint_schedule(std::string_view text) {
  if (text == "interleaved") return JointSchedule::Interleaved;
  if (text == "staged") return JointSchedule::Staged;
  throw std::invalid_argument("unknown joint schedule: " + std::string(text));
}

JointTrainResult train_joint(const PolicyParams& initial, CategoricalTokenModel model,
                             std::span<const GroupSample> dataset, const TrainerConfig& config, double lambda_sft,
                             JointSchedule schedule) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  // Plain gradient steps on both parameter sets.
  PolicyParams::Vector theta = initial.flatten();
  const std::size_t nb = (dataset.size() + config.batch_size - 1) / config.batch_size;
  std::vector<std::size_t> order(dataset.size());
  std::vector<GroupSample> batch;
  JointTrainResult result;

  auto run_phase = [&](bool policy_on, bool tokens_on, int phase) {
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t b = 0; b < nb; ++b) {
        batch.clear();
        const std::size_t end = std::min(order.size(), (b + 1) * config.batch_size);
        for (std::size_t i = b * config.batch_size; i < end; ++i) batch.push_back(dataset[order[i]]);
        const auto params = PolicyParams::unflatten(theta, initial.temperature);
        const auto lg = joint_loss_and_grad(params, initial, batch, config, model, lambda_sft);
        if (!std::isfinite(lg.total)) {
          const std::size_t id = static_cast<std::size_t>(epoch - 1) * nb + b;
          throw TrainingError(id, "non-finite joint loss in batch " + std::to_string(id));
        }
        if (policy_on) {
          for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= config.learning_rate * lg.policy_grad[i];
        }
        if (tokens_on) {
          for (std::size_t i = 0; i < lg.token_grad.size(); ++i) {
            model.logits()[i] -= config.learning_rate * lg.token_grad[i];
          }
        }
      }
      const auto params = PolicyParams::unflatten(theta, initial.temperature);
      result.total_loss.push_back(joint_loss_and_grad(params, initial, dataset, config, model, lambda_sft).total);
    }
  };

  if (schedule == JointSchedule::Interleaved) {
    run_phase(true, true, 0);
  } else {
    run_phase(true, false, 0);
    run_phase(false, true, 1);
  }
  result.params = PolicyParams::unflatten(theta, initial.temperature);
  result.token_logits = model.logits();
  return result;
}

// ---------------------------------------------------------------------------

std::size_t export_sft(std::span<const Demonstration> demos, const std::filesystem::path& out,
                       std::optional<ExpertLevel> level_filter) {
  std::vector<const Demonstration*> picked;
  for (const auto& d : demos) {
    if (!level_filter || d.level == *level_filter) picked.push_back(&d);
  }
  std::stable_sort(picked.begin(), picked.end(),
                   [](const Demonstration* a, const Demonstration* b) { return a->timestamp < b->timestamp; });
  std::vector<json> rows;
  for (const auto* d : picked) {
    rows.push_back({{"prompt", d->state_snapshot},
                    {"completion", d->text},
                    {"level", to_string(d->level)},
                    {"task_id", d->task_id},
                    {"source", d->source}});
  }
  write_jsonl(out, rows);
  return rows.size();
}

// ---------------------------------------------------------------------------

double CompetenceModel::get(const std::string& family, double fallback) const {
  auto it = families.find(family);
  return it == families.end() ? fallback : it->second;
}

void CompetenceModel::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("assimilation rate must lie in (0,1]");
  for (const auto& [name, p] : families) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("competence for " + name + " outside [0,1]");
  }
}

bool assimilate(CompetenceModel& model, const Demonstration& demo, const TaskInstance& task,
                double base_competence) {
  if (!task.gold || !demo.normalized_answer || *demo.normalized_answer != *task.gold) return false;
  const std::string family = task_family(task);
  const double p = model.get(family, base_competence);
  model.families[family] = std::min(1.0, p + model.eta * (1.0 - p));
  return true;
}

SyntheticAgentSpec apply_competence(SyntheticAgentSpec spec, const CompetenceModel& model) {
  for (const auto& [family, p] : model.families) spec.family_competence[family] = p;
  return spec;
}

}  // namespace hila
