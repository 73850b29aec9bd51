#include "marl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace marl {

void PPOConfig::validate() const {
  if (batch_size <= 0 || buffer_size <= 0 || epochs <= 0) {
    throw std::invalid_argument("ppo: batch_size, buffer_size and epochs must be positive");
  }
  if (buffer_size % batch_size != 0) {
    throw std::invalid_argument("ppo: buffer_size must be a multiple of batch_size");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("ppo: lambda must lie in [0, 1]");
  }
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw std::invalid_argument("ppo: clip epsilon must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo: learning_rate must be > 0");
  if (max_steps <= 0) throw std::invalid_argument("ppo: max_steps must be > 0");
  if (entropy_beta < 0.0 || value_coef < 0.0 || !(max_grad_norm > 0.0)) {
    throw std::invalid_argument("ppo: coefficients must be non-negative");
  }
}

double PPOConfig::learning_rate_at(std::int64_t step) const {
  if (!linear_lr_schedule) return learning_rate;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(max_steps);
  return learning_rate * std::max(0.0, frac);
}

double PPOConfig::entropy_beta_at(std::int64_t step) const {
  if (!linear_beta_schedule) return entropy_beta;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(max_steps);
  return entropy_beta * std::max(0.0, frac);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> terminals, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || terminals.size() != n) {
    throw std::invalid_argument("compute_gae: expected |values| = |rewards| + 1 = |terminals| + 1");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double not_done = terminals[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * not_done - values[k];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

void RolloutBuffer::append_segment(std::span<const Transition> segment, double bootstrap_value,
                                   double gamma, double lambda) {
  if (segment.empty()) return;
  const std::size_t n = segment.size();
  std::vector<double> rewards(n), values(n + 1);
  std::vector<std::uint8_t> terminals(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& t = segment[k];
    if (static_cast<int>(t.observation.size()) != obs_dim_ || t.action_raw.size() != action_dim_) {
      throw std::invalid_argument("rollout buffer: transition shape mismatch");
    }
    if (t.terminal && k + 1 != n) {
      throw std::invalid_argument("rollout buffer: terminal transition inside a segment");
    }
    rewards[k] = t.reward;
    values[k] = t.value;
    terminals[k] = t.terminal ? 1 : 0;
  }
  values[n] = segment.back().terminal ? 0.0 : bootstrap_value;
  GaeResult gae = compute_gae(rewards, values, terminals, gamma, lambda);
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& t = segment[k];
    observations_.insert(observations_.end(), t.observation.begin(), t.observation.end());
    actions_.insert(actions_.end(), t.action_raw.data(), t.action_raw.data() + action_dim_);
    log_probs_.push_back(t.log_prob);
    values_.push_back(t.value);
    rewards_.push_back(t.reward);
    terminals_.push_back(terminals[k]);
    agent_ids_.push_back(t.agent_id);
    advantages_.push_back(gae.advantages[k]);
    returns_.push_back(gae.returns[k]);
  }
}

void RolloutBuffer::clear() {
  observations_.clear();
  actions_.clear();
  log_probs_.clear();
  values_.clear();
  rewards_.clear();
  terminals_.clear();
  agent_ids_.clear();
  advantages_.clear();
  returns_.clear();
}

Minibatch gather_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                           std::span<const double> advantages) {
  const auto b = static_cast<Eigen::Index>(indices.size());
  Minibatch mb;
  mb.observations.resize(buffer.obs_dim(), b);
  mb.actions_raw.resize(buffer.action_dim(), b);
  mb.log_probs_old.resize(b);
  mb.advantages.resize(b);
  mb.returns.resize(b);
  for (Eigen::Index c = 0; c < b; ++c) {
    const std::size_t i = indices[c];
    const auto obs = buffer.observation(i);
    const auto act = buffer.action_raw(i);
    mb.observations.col(c) = Eigen::Map<const Eigen::VectorXd>(obs.data(), buffer.obs_dim());
    mb.actions_raw.col(c) = Eigen::Map<const Eigen::VectorXd>(act.data(), buffer.action_dim());
    mb.log_probs_old(c) = buffer.log_probs()[i];
    mb.advantages(c) = advantages[i];
    mb.returns(c) = buffer.returns()[i];
  }
  return mb;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

LossTerms evaluate_loss(const Minibatch& batch, const PolicyParams& params, const PPOConfig& cfg,
                        Eigen::VectorXd* gradient) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("ppo_loss: empty batch");
  const ForwardCache cache = forward_batch(params, batch.observations);
  const Eigen::VectorXd log_std = params.effective_log_std();
  const Eigen::VectorXd inv_std = (-log_std).array().exp();
  const int a_dim = params.shape().action_dim;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = cfg.clip_epsilon;

  LossTerms terms;
  Eigen::MatrixXd d_mean;
  Eigen::RowVectorXd d_value;
  Eigen::VectorXd d_log_std;
  if (gradient) {
    d_mean.resize(a_dim, n);
    d_value.resize(n);
    d_log_std = Eigen::VectorXd::Zero(a_dim);
  }

  double surrogate_sum = 0.0, value_sum = 0.0, kl_sum = 0.0;
  Eigen::Index clipped = 0;
  const double log_std_sum = log_std.sum();
  for (Eigen::Index b = 0; b < n; ++b) {
    double log_prob = -log_std_sum - 0.5 * kLog2Pi * a_dim;
    for (int k = 0; k < a_dim; ++k) {
      const double z = (batch.actions_raw(k, b) - cache.mean(k, b)) * inv_std(k);
      log_prob -= 0.5 * z * z;
    }
    const double log_ratio = log_prob - batch.log_probs_old(b);
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages(b);
    const double unclipped = ratio * adv;
    const double clipped_obj = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    surrogate_sum += std::min(unclipped, clipped_obj);
    if (std::abs(ratio - 1.0) > eps) ++clipped;
    kl_sum += (ratio - 1.0) - log_ratio;
    const double v_err = cache.value(b) - batch.returns(b);
    value_sum += v_err * v_err;

    if (gradient) {
      // d(-mean surrogate)/d log_prob; zero where the clipped branch is the minimum.
      const double g_lp = unclipped <= clipped_obj ? -ratio * adv * inv_n : 0.0;
      for (int k = 0; k < a_dim; ++k) {
        const double z = (batch.actions_raw(k, b) - cache.mean(k, b)) * inv_std(k);
        d_mean(k, b) = g_lp * z * inv_std(k);
        d_log_std(k) += g_lp * (z * z - 1.0);
      }
      d_value(b) = cfg.value_coef * 2.0 * v_err * inv_n;
    }
  }

  terms.policy = -surrogate_sum * inv_n;
  terms.value = value_sum * inv_n;
  terms.entropy = gaussian_entropy(log_std);
  terms.approx_kl = kl_sum * inv_n;
  terms.clip_fraction = static_cast<double>(clipped) * inv_n;
  const double beta = cfg.entropy_mean_over_dims ? cfg.entropy_beta / a_dim : cfg.entropy_beta;
  terms.total = terms.policy + cfg.value_coef * terms.value - beta * terms.entropy;
  if (!std::isfinite(terms.total) || !std::isfinite(terms.approx_kl)) {
    throw NumericError("ppo_loss: non-finite loss (policy=" + std::to_string(terms.policy) +
                       ", value=" + std::to_string(terms.value) + ")");
  }

  if (gradient) {
    d_log_std.array() -= beta;
    *gradient = backward(params, cache, d_mean, d_value, d_log_std);
    if (!gradient->allFinite()) throw NumericError("ppo_loss: non-finite gradient");
  }
  return terms;
}

}  // namespace

LossTerms ppo_loss(const Minibatch& batch, const PolicyParams& params, const PPOConfig& cfg) {
  return evaluate_loss(batch, params, cfg, nullptr);
}

LossTerms ppo_loss_and_gradient(const Minibatch& batch, const PolicyParams& params,
                                const PPOConfig& cfg, Eigen::VectorXd& gradient) {
  return evaluate_loss(batch, params, cfg, &gradient);
}

Adam::Adam(std::size_t n, double beta1, double beta2, double epsilon)
    : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

PolicyLearner::PolicyLearner(PolicyParams p, const PPOConfig& cfg)
    : params(std::move(p)),
      optimizer(params.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon),
      buffer(params.shape().input_dim, params.shape().action_dim) {}

UpdateStats update(PolicyLearner& learner, const PPOConfig& base_cfg, Rng& shuffle_rng) {
  PPOConfig cfg = base_cfg;
  cfg.entropy_beta = base_cfg.entropy_beta_at(learner.steps);
  RolloutBuffer& buffer = learner.buffer;
  const std::size_t n = buffer.size();
  if (n < static_cast<std::size_t>(cfg.buffer_size)) {
    throw std::logic_error("update: buffer holds " + std::to_string(n) + " transitions, needs " +
                           std::to_string(cfg.buffer_size));
  }

  std::vector<double> advantages = buffer.advantages();
  if (cfg.normalize_advantages) {
    const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / n);
    for (double& a : advantages) a = (a - mean) / (stddev + 1e-8);
  }

  UpdateStats stats;
  stats.learning_rate = cfg.learning_rate_at(learner.steps);
  stats.mean_reward =
      std::accumulate(buffer.rewards().begin(), buffer.rewards().end(), 0.0) / static_cast<double>(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int per_epoch = cfg.minibatches_per_epoch();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int m = 0; m < per_epoch; ++m) {
      const std::span<const std::size_t> idx(order.data() + m * batch, batch);
      const Minibatch mb = gather_minibatch(buffer, idx, advantages);
      const LossTerms terms = ppo_loss_and_gradient(mb, learner.params, cfg, grad);
      const double gnorm = grad.norm();
      if (gnorm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gnorm;
      learner.optimizer.step(learner.params.data(), grad, stats.learning_rate);
      learner.params.clamp_log_std();
      if (!learner.params.all_finite()) throw NumericError("update: parameters became non-finite");
      stats.policy_loss += terms.policy;
      stats.value_loss += terms.value;
      stats.approx_kl += terms.approx_kl;
      stats.clip_fraction += terms.clip_fraction;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double k = 1.0 / stats.minibatches;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
  }
  stats.entropy = gaussian_entropy(learner.params.effective_log_std());
  buffer.clear();
  ++learner.updates;
  return stats;
}

}  // namespace marl
