#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "marl/neural.hpp"
#include "marl/rng.hpp"

namespace marl {

struct PPOConfig {
  int batch_size = 1024;
  int buffer_size = 10240;
  int epochs = 3;
  double learning_rate = 3e-4;
  bool linear_lr_schedule = true;  // lr decays linearly to 0 at max_steps
  double entropy_beta = 0.05;
  bool linear_beta_schedule = false;  // beta decays linearly to 0 at max_steps
  // Entropy bonus on the per-dimension mean instead of the sum. Reported
  // entropy is always the sum.
  bool entropy_mean_over_dims = false;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.97;
  double gamma = 0.99;
  std::int64_t max_steps = 2'500'000;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool normalize_advantages = true;

  void validate() const;
  int minibatches_per_epoch() const { return buffer_size / batch_size; }
  double learning_rate_at(std::int64_t step) const;
  double entropy_beta_at(std::int64_t step) const;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// values has one more entry than rewards: the bootstrap value of the state
// after the last transition (callers pass 0 after a true terminal).
// delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t
// A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> terminals, double gamma, double lambda);

struct Transition {
  std::vector<double> observation;
  Eigen::VectorXd action_raw;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool terminal = false;
  std::size_t agent_id = 0;
};

// Store of finished trajectory segments for one policy. Each segment is one
// agent's contiguous, time-ordered run of transitions; advantages are computed
// per segment so they never cross an episode boundary.
class RolloutBuffer {
 public:
  RolloutBuffer() = default;
  RolloutBuffer(int obs_dim, int action_dim) : obs_dim_(obs_dim), action_dim_(action_dim) {}

  // bootstrap_value is v(s_T) for cut or truncated segments and ignored when
  // the last transition is terminal.
  void append_segment(std::span<const Transition> segment, double bootstrap_value, double gamma,
                      double lambda);

  std::size_t size() const { return rewards_.size(); }
  void clear();

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<double>& advantages() const { return advantages_; }
  const std::vector<double>& returns() const { return returns_; }
  const std::vector<std::uint8_t>& terminals() const { return terminals_; }
  const std::vector<std::size_t>& agent_ids() const { return agent_ids_; }
  const std::vector<double>& log_probs() const { return log_probs_; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> observation(std::size_t i) const {
    return {observations_.data() + i * obs_dim_, static_cast<std::size_t>(obs_dim_)};
  }
  std::span<const double> action_raw(std::size_t i) const {
    return {actions_.data() + i * action_dim_, static_cast<std::size_t>(action_dim_)};
  }

 private:
  int obs_dim_ = 0;
  int action_dim_ = 0;
  std::vector<double> observations_;
  std::vector<double> actions_;
  std::vector<double> log_probs_;
  std::vector<double> values_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> terminals_;
  std::vector<std::size_t> agent_ids_;
  std::vector<double> advantages_;
  std::vector<double> returns_;
};

// Column-per-sample view of a minibatch.
struct Minibatch {
  Eigen::MatrixXd observations;  // obs_dim x B
  Eigen::MatrixXd actions_raw;   // action_dim x B
  Eigen::VectorXd log_probs_old;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  Eigen::Index size() const { return advantages.size(); }
};

Minibatch gather_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                           std::span<const double> advantages);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;   // -mean(min(rho*A, clip(rho)*A))
  double value = 0.0;    // mean((v - R)^2), before value_coef
  double entropy = 0.0;  // mean entropy (state-independent std: the closed form)
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// total = policy + value_coef * value - entropy_beta * entropy
// (entropy divided by action_dim when entropy_mean_over_dims).
// Throws NumericError on a non-finite intermediate.
LossTerms ppo_loss(const Minibatch& batch, const PolicyParams& params, const PPOConfig& cfg);
LossTerms ppo_loss_and_gradient(const Minibatch& batch, const PolicyParams& params,
                                const PPOConfig& cfg, Eigen::VectorXd& gradient);

// Per-sample clipped surrogate min(rho*A, clip(rho, 1-eps, 1+eps)*A).
double clipped_surrogate(double ratio, double advantage, double epsilon);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double beta1, double beta2, double epsilon);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
  std::int64_t iterations() const { return t_; }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
  std::int64_t t_ = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double learning_rate = 0.0;
  double mean_reward = 0.0;
  int minibatches = 0;
};

// One policy's parameters, optimizer state, rollout store and step counter.
struct PolicyLearner {
  PolicyParams params;
  Adam optimizer;
  RolloutBuffer buffer;
  std::int64_t steps = 0;
  std::int64_t updates = 0;

  PolicyLearner() = default;
  PolicyLearner(PolicyParams p, const PPOConfig& cfg);
};

// epochs x (buffer_size / batch_size) shuffled minibatch steps, then clears the
// buffer. Throws std::logic_error when the buffer is underfull.
UpdateStats update(PolicyLearner& learner, const PPOConfig& cfg, Rng& shuffle_rng);

}  // namespace marl
