#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marl/neural.hpp"
#include "marl/ppo.hpp"
#include "marl/scenario.hpp"

namespace marl {

enum class TrainingMode : std::uint8_t {
  IndividualPolicy,  // one parameter set per agent, fed only by that agent
  CommonPolicy,      // one shared parameter set fed by every agent
};

std::string_view to_string(TrainingMode m);  // "ip" / "cp"
TrainingMode parse_training_mode(std::string_view name);

struct TrainOptions {
  WorldConfig world;
  PPOConfig ppo;
  NetworkShape network;  // input_dim is taken from the world
  double log_std_init = 0.0;
  TrainingMode mode = TrainingMode::CommonPolicy;
  std::uint64_t seed = 0;
  std::int64_t summary_interval = 10'000;     // policy steps between metrics rows
  std::int64_t checkpoint_interval = 500'000;  // policy steps between checkpoints; 0 disables
  std::filesystem::path out_dir;              // empty: nothing is written
  // Observer for a policy's full buffer, called just before each update.
  std::function<void(std::size_t policy, const RolloutBuffer& buffer)> on_update;
};

// One metrics row. step counts decision steps routed to the policy: summed over
// agents in CP mode, the agent's own steps in IP mode.
struct MetricsRow {
  double sim_time = 0.0;  // simulated seconds since the start of training
  std::int64_t step = 0;
  std::optional<std::size_t> policy;  // empty for the shared policy
  double cumulative_reward = 0.0;     // mean over episodes finished in the interval (NaN if none)
  double episode_length = 0.0;        // mean decision steps, same episodes
  std::int64_t episodes = 0;
  double success_rate = 0.0;
  double entropy = 0.0;
  std::optional<double> policy_loss;  // from the latest update
  std::optional<double> value_loss;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  std::vector<std::int64_t> policy_steps;
  std::int64_t updates = 0;
  std::int64_t world_steps = 0;
  double wall_seconds = 0.0;
};

// Runs the scenario loop until every policy has seen ppo.max_steps decision
// steps. When out_dir is set, writes metrics.csv, checkpoints/ and policy.json.
TrainResult train(const TrainOptions& options,
                  const std::function<void(const MetricsRow&)>& on_row = {});

}  // namespace marl
