#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marl/rng.hpp"
#include "marl/sim.hpp"

namespace marl {

enum class Experiment : std::uint8_t {
  G2GCA,    // go-to-goal from wall midpoints
  APE,      // antipodal corner exchange
  G2GCARI,  // go-to-goal from random poses in the opposite quadrant
};

std::string_view to_string(Experiment e);
// Accepts "g2gca", "ape", "g2gcari" (any case). Throws std::invalid_argument.
Experiment parse_experiment(std::string_view name);

enum class Outcome : std::uint8_t { Success, PeerCollision, WallCollision, Timeout };

std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view name);

struct WorldConfig {
  std::size_t n_agents = 4;
  Experiment experiment = Experiment::G2GCA;
  std::int64_t max_decision_steps = 1000;
  std::uint64_t seed = 0;
  Arena arena = Arena::square(4);
  RewardConfig reward;
  int ticks_per_decision = 5;
  double tick_seconds = 0.02;
  // Observation components are divided by this; 1.0 disables normalization.
  double observation_scale = 5.0;
  // 0 keeps spawns unchecked against live peers.
  double min_spawn_separation = 0.0;
  bool record_trajectories = false;

  void validate() const;
  std::size_t observation_dim() const { return 4 + 2 * (n_agents - 1); }
  double decision_seconds() const { return ticks_per_decision * tick_seconds; }
};

using Observation = std::vector<double>;

struct TrajectoryPoint {
  std::int64_t tick = 0;
  Pose pose;
  Action action;
};

struct EpisodeRecord {
  std::size_t agent_id = 0;
  std::int64_t episode_index = 0;
  Outcome outcome = Outcome::Timeout;
  std::int64_t decision_steps = 0;
  double cumulative_reward = 0.0;
  Vec2 goal;
  std::vector<TrajectoryPoint> trajectory;
};

struct StepResult {
  Observation observation;  // built after the move, before any respawn
  double reward = 0.0;
  bool terminal = false;    // episode ended (goal, collision or timeout)
  bool truncated = false;   // ended only because of the step cap
  std::optional<Outcome> outcome;
};

// Spawn pose for one agent. Geometry is defined for the four-agent layout;
// agent i > 3 reuses slot (i mod 4).
Pose spawn(Experiment experiment, std::size_t agent_id, const Arena& arena, Rng& rng);

// Axis-aligned box of admissible G2GCARI spawn positions for an agent.
struct SpawnBox {
  double x_min, x_max, z_min, z_max;
};
SpawnBox random_spawn_box(std::size_t agent_id, const Arena& arena);

// Ego position, relative goal, then relative peer positions in ascending
// agent order (ego skipped); every component divided by `scale`.
Observation assemble_observation(std::span<const AgentState> agents, std::size_t ego,
                                 double scale);

class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const { return config_; }
  std::size_t size() const { return agents_.size(); }
  std::span<const AgentState> agents() const { return agents_; }
  const AgentState& agent(std::size_t id) const { return agents_.at(id); }
  std::int64_t tick() const { return tick_; }
  std::int64_t episodes_completed(std::size_t id) const { return episode_counter_.at(id); }

  // Throws std::logic_error for inactive agents.
  Observation build_observation(std::size_t id) const;

  // Advances one decision step: ticks_per_decision physics ticks with each
  // command held, then one reward evaluation per agent. actions[i] must be
  // engaged exactly for the agents that are Active.
  std::vector<StepResult> step(std::span<const std::optional<Action>> actions);
  std::vector<StepResult> step(std::span<const Action> actions);

  // Respawns a finished agent in place and returns the record of the episode
  // it just completed. Throws std::logic_error on an Active agent.
  EpisodeRecord respawn_if_terminal(std::size_t id);

  // Test hook: places an agent directly (pose only; goal untouched).
  void place(std::size_t id, const Pose& pose);

 private:
  void reset_agent(std::size_t id);
  std::vector<AgentState> peers_of(std::size_t id) const;

  WorldConfig config_;
  Rng spawn_rng_;
  std::vector<AgentState> agents_;
  std::vector<Outcome> last_outcome_;
  std::vector<std::vector<TrajectoryPoint>> trajectories_;
  std::vector<std::int64_t> episode_counter_;
  std::int64_t tick_ = 0;
};

}  // namespace marl
