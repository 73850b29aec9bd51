#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marl/rng.hpp"
#include "marl/sim.hpp"

namespace marl {

enum class Activation : std::uint8_t { Tanh, Relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct NetworkShape {
  int input_dim = 10;
  int hidden_layers = 2;
  int hidden_units = 128;
  int action_dim = 2;
  Activation activation = Activation::Tanh;
  // Raw actions are clipped to [-action_clip, action_clip] and divided by it
  // before the actuator mapping.
  double action_clip = 1.0;
  // Give the value head its own hidden stack instead of sharing the trunk.
  bool separate_value = false;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

// Flat parameter vector of the MLP:
//   hidden_layers x (W: units x in, b: units), mean head (W, b), value head (W, b),
//   [value stack: hidden_layers x (W, b) when separate_value], log_std.
// Weights are stored column-major so each block maps onto an Eigen matrix.
class PolicyParams {
 public:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  PolicyParams() = default;
  // All parameters zero.
  explicit PolicyParams(const NetworkShape& shape);

  // Orthogonal init (gain sqrt 2) on hidden layers, gain 0.01 on the mean head,
  // gain 1 on the value head, zero biases and zero log_std.
  static PolicyParams initialized(const NetworkShape& shape, Rng& rng);

  const NetworkShape& shape() const { return shape_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  // Linear layers in order: hidden..., mean head, value head.
  int num_linear() const { return static_cast<int>(blocks_.size()); }
  int mean_head() const { return shape_.hidden_layers; }
  int value_head() const { return shape_.hidden_layers + 1; }
  // Hidden layer l of the value stack (only when shape().separate_value).
  int value_hidden(int l) const { return shape_.hidden_layers + 2 + l; }

  MatMap weight(int layer);
  ConstMatMap weight(int layer) const;
  VecMap bias(int layer);
  ConstVecMap bias(int layer) const;
  VecMap log_std();
  ConstVecMap log_std() const;

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }

  // Log-std clamped to [kLogStdMin, kLogStdMax].
  Eigen::VectorXd effective_log_std() const;
  void clamp_log_std();
  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  struct Block {
    std::size_t w_offset, b_offset;
    int rows, cols;
  };
  NetworkShape shape_;
  std::vector<Block> blocks_;
  std::size_t log_std_offset_ = 0;
  Eigen::VectorXd data_;
};

struct PolicyOutput {
  Eigen::VectorXd mean;  // pre-squash policy mean (action_dim)
  double value = 0.0;
};

// Activations kept for the backward pass. Columns are samples.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;  // post-activation output of each hidden layer
  std::vector<Eigen::MatrixXd> value_hidden;  // value stack, when separate
  Eigen::MatrixXd mean;                 // action_dim x B
  Eigen::RowVectorXd value;             // 1 x B
};

// Throws std::invalid_argument on an input dimension mismatch.
PolicyOutput forward(const PolicyParams& params, std::span<const double> observation);
ForwardCache forward_batch(const PolicyParams& params, const Eigen::MatrixXd& inputs);

// Reverse-mode pass. Given dL/dmean, dL/dvalue for every column of the cached
// batch and dL/dlog_std, returns dL/dtheta in the flat parameter layout.
Eigen::VectorXd backward(const PolicyParams& params, const ForwardCache& cache,
                         const Eigen::MatrixXd& d_mean, const Eigen::RowVectorXd& d_value,
                         const Eigen::VectorXd& d_log_std);

// Diagonal Gaussian helpers.
double gaussian_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& log_std);
double gaussian_entropy(const Eigen::VectorXd& log_std);

// Clip each raw channel to [-c, c] and divide by c, then map the resulting
// u in [-1, 1] onto the actuator ranges: v = 0.05 * (u0 + 1) / 2, omega = pi * u1.
Action action_from_raw(const Eigen::VectorXd& raw, double clip = 1.0);

struct DistributionSample {
  Eigen::VectorXd action_raw;  // unclipped Gaussian draw
  Action action;
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

DistributionSample sample_action(const PolicyParams& params, std::span<const double> observation,
                                 Rng& rng);
// Uses the mean as the raw action; log_prob is evaluated at the mean.
DistributionSample mean_action(const PolicyParams& params, std::span<const double> observation);

// ---------------------------------------------------------------------------
// Checkpoints. JSON document, documented in docs/formats.md:
//   {"format": "marl.checkpoint", "version": 1, "mode": "cp"|"ip",
//    "experiment": "...", "n_agents": N, "observation_scale": s,
//    "step": k, "policies": [{"shape": {...}, "params": [...]}, ...]}
// Doubles are written in shortest round-trip form, so reload is bit-exact.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string mode = "cp";
  std::string experiment = "g2gca";
  std::size_t n_agents = 4;
  double observation_scale = 5.0;
  std::int64_t step = 0;
  std::vector<PolicyParams> policies;

  // CP checkpoints hold one policy shared by every agent.
  const PolicyParams& policy_for(std::size_t agent_id) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace marl
