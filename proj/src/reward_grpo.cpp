#include "hila/reward_grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hila/rng.hpp"

namespace hila {

void RewardConfig::validate() const {
  if (!(c_create >= 0.0)) throw std::invalid_argument("c_create must be >= 0");
  if (!(c_defer > c_create)) throw std::invalid_argument("c_defer must be greater than c_create");
  if (scale != 1.0) throw std::invalid_argument("reward scale is fixed at 1.0");
}

double compute_reward(ActionType action, bool correct, const RewardConfig& config) {
  const double r = correct ? config.scale : 0.0;
  switch (action) {
    case ActionType::Eval: return r;
    case ActionType::Create: return r - config.c_create;
    case ActionType::Defer: return r - config.c_defer;
  }
  return r;
}

std::vector<double> compute_advantages(std::span<const double> rewards, bool normalize) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages need a group of at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  // Shifted mean: equal rewards give exactly zero advantages.
  const double r0 = rewards[0];
  double shift = 0.0;
  for (double r : rewards) shift += r - r0;
  shift /= n;
  std::vector<double> a(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) a[k] = (rewards[k] - r0) - shift;
  if (normalize) {
    double var = 0.0;
    for (double x : a) var += x * x;
    const double sd = std::sqrt(var / n);
    if (sd > 1e-8) {
      for (double& x : a) x /= sd;
    }
  }
  return a;
}

void GroupSample::set_advantages(bool normalize) {
  const auto a = compute_advantages(rewards, normalize);
  std::copy(a.begin(), a.end(), advantages.begin());
}

std::string_view to_string(Surrogate s) { return s == Surrogate::Clip ? "clip" : "reinforce"; }

Surrogate parse_surrogate(std::string_view text) {
  if (text == "clip") return Surrogate::Clip;
  if (text == "reinforce") return Surrogate::Reinforce;
  throw std::invalid_argument("unknown surrogate: " + std::string(text));
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer: " + std::string(text));
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(beta_kl >= 0.0) || !(beta_ent >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("clip epsilon must be positive");
}

namespace {

using Logits = std::array<double, kNumActionTypes>;

// Adds dL/dz (per-logit) into the flat parameter gradient.
void backprop(const Logits& dz, const FeatureVector& phi, double temperature, double weight,
              PolicyParams::Vector& grad) {
  for (std::size_t k = 0; k < kNumActionTypes; ++k) {
    const double g = weight * dz[k] / temperature;
    for (std::size_t j = 0; j < kFeatureDim; ++j) grad[k * kFeatureDim + j] += g * phi[j];
    grad[PolicyParams::kWeights + k] += g;
  }
}

}  // namespace

LossAndGrad inner_loss_and_grad(const PolicyParams& params, const PolicyParams& reference,
                                std::span<const GroupSample> batch, const TrainerConfig& config) {
  if (batch.empty()) throw std::invalid_argument("inner loss needs a nonempty batch");
  LossAndGrad out;
  const double pairs = static_cast<double>(batch.size() * kNumActionTypes);
  const double states = static_cast<double>(batch.size());

  for (const GroupSample& s : batch) {
    const ActionProbs pi = action_distribution(params, s.features).probs;
    const ActionProbs ref = action_distribution(reference, s.features).probs;
    Logits log_pi{};
    for (std::size_t k = 0; k < kNumActionTypes; ++k) log_pi[k] = std::log(pi[k]);

    // Policy-gradient term over the enumerated actions.
    Logits dz_pg{};
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      const auto a = static_cast<std::size_t>(s.actions[k]);
      const double adv = s.advantages[k];
      double coeff = 0.0;  // dL/dlog pi_a
      if (config.surrogate == Surrogate::Reinforce) {
        out.loss.pg += -adv * log_pi[a];
        coeff = -adv;
      } else {
        const double old = s.behavior_probs[k];
        if (!(old > 0.0)) throw std::invalid_argument("behavior probability must be positive for every enumerated action");
        const double ratio = pi[a] / old;
        const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        const double unclipped_obj = ratio * adv;
        const double clipped_obj = clipped * adv;
        if (unclipped_obj <= clipped_obj) {
          out.loss.pg += -unclipped_obj;
          coeff = -adv * ratio;
        } else {
          out.loss.pg += -clipped_obj;
        }
      }
      if (coeff != 0.0) {
        for (std::size_t j = 0; j < kNumActionTypes; ++j) dz_pg[j] += coeff * ((j == a ? 1.0 : 0.0) - pi[j]);
      }
    }
    backprop(dz_pg, s.features, params.temperature, 1.0 / pairs, out.grad);

    double kl = 0.0, ent = 0.0;
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      kl += pi[k] * (log_pi[k] - std::log(ref[k]));
      ent -= pi[k] * log_pi[k];
    }
    out.loss.kl += kl;
    out.loss.entropy += ent;

    Logits dz_reg{};
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      const double dkl = pi[k] * ((log_pi[k] - std::log(ref[k])) - kl);
      const double dent = -pi[k] * (log_pi[k] + ent);
      dz_reg[k] = config.beta_kl * dkl - config.beta_ent * dent;
    }
    backprop(dz_reg, s.features, params.temperature, 1.0 / states, out.grad);
  }

  out.loss.pg /= pairs;
  out.loss.kl /= states;
  out.loss.entropy /= states;
  out.loss.inner = out.loss.pg + config.beta_kl * out.loss.kl - config.beta_ent * out.loss.entropy;
  return out;
}

ActionProbs mean_distribution(const PolicyParams& params, std::span<const FeatureVector> states) {
  ActionProbs m{};
  if (states.empty()) return m;
  for (const auto& f : states) {
    const auto p = action_distribution(params, f).probs;
    for (std::size_t k = 0; k < kNumActionTypes; ++k) m[k] += p[k];
  }
  for (double& x : m) x /= static_cast<double>(states.size());
  return m;
}

namespace {

class Optimizer {
 public:
  explicit Optimizer(const TrainerConfig& c) : c_(c) {}

  void step(PolicyParams::Vector& theta, const PolicyParams::Vector& g, double lr) {
    if (c_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = b1 * m_[i] + (1 - b1) * g[i];
      v_[i] = b2 * v_[i] + (1 - b2) * g[i] * g[i];
      theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  const TrainerConfig& c_;
  PolicyParams::Vector m_{}, v_{};
  int t_ = 0;
};

}  // namespace

TrainResult train(const PolicyParams& initial, std::span<const GroupSample> dataset, const TrainerConfig& config,
                  std::span<const FeatureVector> probes, const PolicyParams* reference) {
  config.validate();
  initial.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");

  std::vector<FeatureVector> own_probes;
  if (probes.empty()) {
    for (const auto& s : dataset) own_probes.push_back(s.features);
    probes = own_probes;
  }
  const PolicyParams ref = reference ? *reference : initial;

  double mean_reward = 0.0;
  for (const auto& s : dataset) {
    for (double r : s.rewards) mean_reward += r;
  }
  mean_reward /= static_cast<double>(dataset.size() * kNumActionTypes);

  const std::size_t batches_per_epoch = (dataset.size() + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;

  TrainResult result;
  PolicyParams::Vector theta = initial.flatten();
  Optimizer opt(config);
  std::vector<std::size_t> order(dataset.size());
  std::vector<GroupSample> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      batch.clear();
      const std::size_t end = std::min(order.size(), (b + 1) * config.batch_size);
      for (std::size_t i = b * config.batch_size; i < end; ++i) batch.push_back(dataset[order[i]]);
      const PolicyParams current = PolicyParams::unflatten(theta, initial.temperature);
      const LossAndGrad lg = inner_loss_and_grad(current, ref, batch, config);
      const bool finite = std::isfinite(lg.loss.inner) &&
                          std::all_of(lg.grad.begin(), lg.grad.end(), [](double x) { return std::isfinite(x); });
      const std::size_t batch_id = static_cast<std::size_t>(epoch - 1) * batches_per_epoch + b;
      if (!finite) throw TrainingError(batch_id, "non-finite loss in batch " + std::to_string(batch_id));
      double lr = config.learning_rate;
      if (config.cosine_decay) lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(result.steps) / total_steps));
      opt.step(theta, lg.grad, lr);
      ++result.steps;
    }

    const PolicyParams current = PolicyParams::unflatten(theta, initial.temperature);
    EpochTelemetry t;
    t.epoch = epoch;
    t.loss = inner_loss_and_grad(current, ref, dataset, config).loss;
    t.probe_distribution = mean_distribution(current, probes);
    t.mean_reward = mean_reward;
    result.telemetry.push_back(t);
  }
  result.params = PolicyParams::unflatten(theta, initial.temperature);
  return result;
}

void write_telemetry_csv(const std::filesystem::path& path, std::span<const EpochTelemetry> telemetry) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write telemetry to " + path.string());
  out << "epoch,l_pg,l_kl,l_entropy,l_total,p_eval,p_create,p_defer,mean_reward\n";
  char buf[512];
  for (const auto& t : telemetry) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", t.epoch, t.loss.pg,
                  t.loss.kl, t.loss.entropy, t.loss.inner, t.probe_distribution[0], t.probe_distribution[1],
                  t.probe_distribution[2], t.mean_reward);
    out << buf;
  }
}

}  // namespace hila
