#include "marl/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace marl {

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::G2GCA: return "g2gca";
    case Experiment::APE: return "ape";
    case Experiment::G2GCARI: return "g2gcari";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "g2gca") return Experiment::G2GCA;
  if (lower == "ape") return Experiment::APE;
  if (lower == "g2gcari") return Experiment::G2GCARI;
  throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::PeerCollision: return "peer_collision";
    case Outcome::WallCollision: return "wall_collision";
    case Outcome::Timeout: return "timeout";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view name) {
  if (name == "success") return Outcome::Success;
  if (name == "peer_collision") return Outcome::PeerCollision;
  if (name == "wall_collision") return Outcome::WallCollision;
  if (name == "timeout") return Outcome::Timeout;
  throw std::invalid_argument("unknown outcome '" + std::string(name) + "'");
}

void WorldConfig::validate() const {
  if (n_agents < 2) throw std::invalid_argument("world: n_agents must be >= 2");
  if (max_decision_steps <= 0) throw std::invalid_argument("world: max_decision_steps must be > 0");
  if (ticks_per_decision <= 0 || !(tick_seconds > 0.0)) {
    throw std::invalid_argument("world: tick timing must be positive");
  }
  if (!(observation_scale > 0.0)) throw std::invalid_argument("world: observation_scale must be > 0");
  if (min_spawn_separation < 0.0) throw std::invalid_argument("world: min_spawn_separation < 0");
  if (arena.goals.size() != n_agents) {
    throw std::invalid_argument("world: arena must hold exactly one goal per agent");
  }
  arena.validate();
  reward.validate();
}

namespace {

double heading_towards(Vec2 from, Vec2 to) {
  const Vec2 d = to - from;
  return wrap_angle(std::atan2(d.x, d.z));
}

}  // namespace

SpawnBox random_spawn_box(std::size_t agent_id, const Arena& arena) {
  const Vec2 goal = arena.goals.at(agent_id);
  const double lo = arena.robot_radius;
  const double hi = arena.half_extent - 0.5 * arena.wall_width - 2.0 * arena.robot_radius;
  const double sx = goal.x > 0.0 ? -1.0 : 1.0;
  const double sz = goal.z > 0.0 ? -1.0 : 1.0;
  SpawnBox box{};
  box.x_min = sx > 0 ? lo : -hi;
  box.x_max = sx > 0 ? hi : -lo;
  box.z_min = sz > 0 ? lo : -hi;
  box.z_max = sz > 0 ? hi : -lo;
  return box;
}

Pose spawn(Experiment experiment, std::size_t agent_id, const Arena& arena, Rng& rng) {
  if (agent_id >= arena.goals.size()) throw std::out_of_range("spawn: agent_id out of range");
  const double inset = arena.half_extent - 1.0;
  const Vec2 origin{0.0, 0.0};
  switch (experiment) {
    case Experiment::G2GCA: {
      // wall midpoints: south, east, north, west
      static constexpr double kDirs[4][2] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
      const auto& d = kDirs[agent_id % 4];
      const Vec2 p{inset * d[0], inset * d[1]};
      return {p.x, p.z, heading_towards(p, origin)};
    }
    case Experiment::APE: {
      const Vec2 goal = arena.goals[agent_id];
      const Vec2 p{-goal.x, -goal.z};
      return {p.x, p.z, heading_towards(p, origin)};
    }
    case Experiment::G2GCARI: {
      const SpawnBox box = random_spawn_box(agent_id, arena);
      std::uniform_real_distribution<double> ux(box.x_min, box.x_max);
      std::uniform_real_distribution<double> uz(box.z_min, box.z_max);
      std::uniform_real_distribution<double> uh(-kPi, kPi);
      const double x = ux(rng);
      const double z = uz(rng);
      return {x, z, wrap_angle(uh(rng))};
    }
  }
  throw std::invalid_argument("spawn: invalid experiment");
}

Observation assemble_observation(std::span<const AgentState> agents, std::size_t ego,
                                 double scale) {
  const AgentState& me = agents[ego];
  const Vec2 p = me.pose.position();
  Observation obs;
  obs.reserve(4 + 2 * (agents.size() - 1));
  obs.push_back(p.x / scale);
  obs.push_back(p.z / scale);
  obs.push_back((me.goal.x - p.x) / scale);
  obs.push_back((me.goal.z - p.z) / scale);
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (j == ego) continue;
    obs.push_back((agents[j].pose.px - p.x) / scale);
    obs.push_back((agents[j].pose.pz - p.z) / scale);
  }
  return obs;
}

World::World(WorldConfig config)
    : config_(std::move(config)), spawn_rng_(make_stream(config_.seed, "spawn")) {
  config_.validate();
  const std::size_t n = config_.n_agents;
  agents_.resize(n);
  last_outcome_.assign(n, Outcome::Timeout);
  trajectories_.resize(n);
  episode_counter_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) agents_[i].goal = config_.arena.goals[i];
  // Collective initial spawn; peers not yet placed are treated as inactive.
  for (auto& a : agents_) a.status = AgentStatus::TimedOut;
  for (std::size_t i = 0; i < n; ++i) reset_agent(i);
}

void World::reset_agent(std::size_t id) {
  AgentState& a = agents_[id];
  Pose pose = spawn(config_.experiment, id, config_.arena, spawn_rng_);
  if (config_.min_spawn_separation > 0.0 && config_.experiment == Experiment::G2GCARI) {
    auto too_close = [&](const Pose& candidate) {
      for (std::size_t j = 0; j < agents_.size(); ++j) {
        if (j == id || !agents_[j].active()) continue;
        if (distance(agents_[j].pose.position(), candidate.position()) <=
            config_.min_spawn_separation) {
          return true;
        }
      }
      return false;
    };
    for (int attempt = 0; attempt < 1000 && too_close(pose); ++attempt) {
      pose = spawn(config_.experiment, id, config_.arena, spawn_rng_);
    }
  }
  a.pose = pose;
  a.goal = config_.arena.goals[id];
  a.status = AgentStatus::Active;
  a.decision_step_count = 0;
  a.accumulated_reward = 0.0;
  trajectories_[id].clear();
  if (config_.record_trajectories) trajectories_[id].push_back({tick_, pose, Action{}});
}

std::vector<AgentState> World::peers_of(std::size_t id) const {
  std::vector<AgentState> peers;
  peers.reserve(agents_.size() - 1);
  for (std::size_t j = 0; j < agents_.size(); ++j) {
    if (j != id) peers.push_back(agents_[j]);
  }
  return peers;
}

Observation World::build_observation(std::size_t id) const {
  if (!agents_.at(id).active()) throw std::logic_error("build_observation: agent is not active");
  return assemble_observation(agents_, id, config_.observation_scale);
}

std::vector<StepResult> World::step(std::span<const Action> actions) {
  std::vector<std::optional<Action>> wrapped(actions.begin(), actions.end());
  return step(std::span<const std::optional<Action>>(wrapped));
}

std::vector<StepResult> World::step(std::span<const std::optional<Action>> actions) {
  const std::size_t n = agents_.size();
  if (actions.size() != n) throw std::invalid_argument("world_step: one slot per agent required");
  for (std::size_t i = 0; i < n; ++i) {
    if (actions[i].has_value() != agents_[i].active()) {
      throw std::invalid_argument(agents_[i].active()
                                      ? "world_step: missing action for an active agent"
                                      : "world_step: action supplied for a non-active agent");
    }
  }

  for (int t = 0; t < config_.ticks_per_decision; ++t) {
    ++tick_;
    for (std::size_t i = 0; i < n; ++i) {
      if (!agents_[i].active()) continue;
      agents_[i].pose = step_kinematics(agents_[i].pose, *actions[i], config_.tick_seconds);
      if (config_.record_trajectories) {
        trajectories_[i].push_back({tick_, agents_[i].pose, *actions[i]});
      }
    }
  }

  std::vector<StepResult> results(n);
  std::vector<RewardResult> rewards(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!agents_[i].active()) continue;
    const auto peers = peers_of(i);
    rewards[i] = compute_reward(agents_[i], peers, config_.arena, config_.reward);
    results[i].observation = assemble_observation(agents_, i, config_.observation_scale);
    results[i].reward = rewards[i].reward;
  }

  // Statuses change only after every agent has been scored, so a mutual
  // contact penalizes both participants.
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = agents_[i];
    if (!a.active()) continue;
    StepResult& r = results[i];
    a.decision_step_count += 1;
    a.accumulated_reward += r.reward;
    if (rewards[i].terminal) {
      r.terminal = true;
      switch (rewards[i].kind) {
        case RewardCase::Goal:
          a.status = AgentStatus::ReachedGoal;
          r.outcome = Outcome::Success;
          break;
        case RewardCase::PeerCollision:
          a.status = AgentStatus::Collided;
          r.outcome = Outcome::PeerCollision;
          break;
        default:
          a.status = AgentStatus::Collided;
          r.outcome = Outcome::WallCollision;
          break;
      }
    } else if (a.decision_step_count >= config_.max_decision_steps) {
      a.status = AgentStatus::TimedOut;
      r.terminal = true;
      r.truncated = true;
      r.outcome = Outcome::Timeout;
    }
    if (r.outcome) last_outcome_[i] = *r.outcome;
  }
  return results;
}

EpisodeRecord World::respawn_if_terminal(std::size_t id) {
  AgentState& a = agents_.at(id);
  if (a.active()) throw std::logic_error("respawn_if_terminal: agent is still active");
  EpisodeRecord rec;
  rec.agent_id = id;
  rec.episode_index = episode_counter_[id]++;
  rec.outcome = last_outcome_[id];
  rec.decision_steps = a.decision_step_count;
  rec.cumulative_reward = a.accumulated_reward;
  rec.goal = a.goal;
  rec.trajectory = std::move(trajectories_[id]);
  reset_agent(id);
  return rec;
}

void World::place(std::size_t id, const Pose& pose) {
  agents_.at(id).pose = Pose{pose.px, pose.pz, wrap_angle(pose.theta)};
}

}  // namespace marl
