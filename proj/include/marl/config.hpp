#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "marl/trainer.hpp"

namespace marl {

// Hidden-layer count used for each experiment's network.
int hidden_layers_for(Experiment e);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a training run needs. Serializes to a single JSON object;
// the resolved object is what gets echoed into the run directory.
struct RunConfig {
  std::string name = "g2gca_cp";
  Experiment experiment = Experiment::G2GCA;
  TrainingMode mode = TrainingMode::CommonPolicy;
  std::uint64_t seed = 1;
  std::string output_dir;  // relative paths resolve against MARL_OUTPUT_ROOT
  std::int64_t summary_interval = 10'000;
  std::int64_t checkpoint_interval = 500'000;

  // world overrides
  std::size_t n_agents = 4;
  std::int64_t max_decision_steps = 1000;
  double observation_scale = 5.0;
  double min_spawn_separation = 0.0;
  RewardConfig reward;

  // network
  int hidden_layers = 2;
  int hidden_units = 128;
  Activation activation = Activation::Tanh;
  double action_clip = 1.0;
  bool separate_value = false;
  double log_std_init = 0.0;

  PPOConfig ppo;

  void validate() const;
  TrainOptions to_train_options() const;
};

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown preset.
nlohmann::json preset_json(const std::string& name);

// Resolves "preset" inheritance (presets may themselves name a preset) and
// deep-merges the document's own keys on top. Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// Resolves cfg.output_dir against MARL_OUTPUT_ROOT (default "runs").
std::filesystem::path resolve_output_dir(const std::string& dir);

}  // namespace marl
