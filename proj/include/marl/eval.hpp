#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "marl/neural.hpp"
#include "marl/records.hpp"
#include "marl/scenario.hpp"

namespace marl {

struct EvalOptions {
  std::size_t n_episodes = 500;  // per agent
  std::uint64_t seed = 0;
  bool deterministic = false;    // use the policy mean instead of sampling
  std::int64_t max_decision_steps = 1000;
  double min_spawn_separation = 0.0;
  // Episodes per agent whose tick-level trajectory is kept in the report.
  std::size_t trajectory_episodes = 1;
};

struct AgentEvalStats {
  std::size_t agent_id = 0;
  std::int64_t episodes = 0;
  std::int64_t successes = 0;
  std::int64_t peer_collisions = 0;
  std::int64_t wall_collisions = 0;
  std::int64_t timeouts = 0;
  double success_rate = 0.0;  // percent
};

struct EvalReport {
  RecordHeader header;
  std::size_t n_episodes = 0;
  bool deterministic = false;
  std::vector<AgentEvalStats> agents;
  double average_success_rate = 0.0;  // mean of the per-agent rates, percent
  double mean_steps_to_goal = 0.0;    // successful episodes only; 0 when none
  double mean_seconds_to_goal = 0.0;
  std::vector<EpisodeRecord> episodes;  // ordered by completion
};

// Scripted stand-in for a trained policy.
using ScriptedPolicy = std::function<Action(std::size_t agent, const Observation& obs)>;

// Runs until every agent has completed n_episodes; agents respawn
// independently and keep acting (as moving obstacles) once their quota is met.
// Throws std::invalid_argument on a checkpoint/experiment shape mismatch.
EvalReport evaluate(const Checkpoint& checkpoint, Experiment experiment, const EvalOptions& opts);
EvalReport evaluate_scripted(const ScriptedPolicy& policy, const WorldConfig& world,
                             const EvalOptions& opts);

std::string report_to_json(const EvalReport& report);

// Writes trajectory_agent<i>.csv (episode,tick,px,pz,theta,v,omega) for every
// record that carries a trajectory, plus trajectories.svg.
void export_trajectories(const std::vector<EpisodeRecord>& records, const RecordHeader& header,
                         const std::filesystem::path& out_dir);

// Overhead trajectory panel plus linear/angular velocity panels.
std::string render_svg(const RecordHeader& header, const std::vector<EpisodeRecord>& records);

struct LatencyStats {
  std::size_t trials = 0;
  double mean_us = 0.0;
  double median_us = 0.0;
  double p99_us = 0.0;
};

// Times build_observation + forward + sample_action per cycle on the calling thread.
LatencyStats measure_latency(const Checkpoint& checkpoint, Experiment experiment,
                             std::size_t n_trials, std::uint64_t seed = 0);

}  // namespace marl
