#include "marl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace marl {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.z * b.z; }
double squared_norm(Vec2 a) { return dot(a, a); }
double norm(Vec2 a) { return std::hypot(a.x, a.z); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

double wrap_angle(double radians) {
  double r = std::remainder(radians, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Action::Action(double v, double omega) {
  if (!std::isfinite(v) || !std::isfinite(omega)) {
    throw std::invalid_argument("Action: non-finite command");
  }
  v_ = std::clamp(v, 0.0, kMaxLinear);
  omega_ = std::clamp(omega, -kMaxAngular, kMaxAngular);
}

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 ab = s.b - s.a;
  const double len2 = squared_norm(ab);
  if (len2 == 0.0) return distance(p, s.a);
  const double t = std::clamp(dot(p - s.a, ab) / len2, 0.0, 1.0);
  return distance(p, s.a + t * ab);
}

Arena Arena::square(std::size_t n_agents, double half_extent) {
  Arena arena;
  arena.half_extent = half_extent;
  const double h = half_extent;
  // south, east, north, west
  arena.walls = {
      {{-h, -h}, {h, -h}},
      {{h, -h}, {h, h}},
      {{h, h}, {-h, h}},
      {{-h, h}, {-h, -h}},
  };
  const double c = h - 1.0;
  const Vec2 corners[4] = {{c, c}, {-c, c}, {-c, -c}, {c, -c}};
  arena.goals.reserve(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) arena.goals.push_back(corners[i % 4]);
  return arena;
}

void Arena::validate() const {
  if (!(half_extent > 0.0) || !(wall_width >= 0.0) || !(robot_radius > 0.0) ||
      !(goal_radius > 0.0)) {
    throw std::invalid_argument("arena: extents and radii must be positive");
  }
  if (walls.empty()) throw std::invalid_argument("arena: no wall segments");
  const double clearance = robot_radius + 0.5 * wall_width;
  for (const Vec2& g : goals) {
    if (!(min_wall_distance(g, *this) > clearance) || std::abs(g.x) >= half_extent ||
        std::abs(g.z) >= half_extent) {
      throw std::invalid_argument("arena: goal too close to a wall");
    }
  }
}

void RewardConfig::validate() const {
  if (!(goal_reward > 0.0) || !(collision_reward < 0.0) || !(distance_coeff < 0.0)) {
    throw std::invalid_argument(
        "reward: requires goal_reward > 0, collision_reward < 0, distance_coeff < 0");
  }
}

Pose step_kinematics(const Pose& pose, const Action& action, double dt) {
  Pose next;
  next.theta = wrap_angle(pose.theta + action.omega() * dt);
  next.px = pose.px + action.v() * std::sin(next.theta);
  next.pz = pose.pz + action.v() * std::cos(next.theta);
  return next;
}

double min_wall_distance(Vec2 p, const Arena& arena) {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& w : arena.walls) best = std::min(best, point_segment_distance(p, w));
  return best;
}

CollisionKind detect_collision(const AgentState& ego, std::span<const AgentState> peers,
                               const Arena& arena) {
  const Vec2 p = ego.pose.position();
  const double peer_limit = 2.0 * arena.robot_radius;
  for (const AgentState& peer : peers) {
    if (!peer.active()) continue;
    if (distance(peer.pose.position(), p) <= peer_limit) return CollisionKind::PeerCollision;
  }
  const double wall_limit = arena.robot_radius + 0.5 * arena.wall_width;
  for (const Segment& w : arena.walls) {
    if (point_segment_distance(p, w) <= wall_limit) return CollisionKind::WallCollision;
  }
  return CollisionKind::None;
}

bool check_goal(const AgentState& ego, double goal_radius) {
  return distance(ego.goal, ego.pose.position()) <= goal_radius;
}

RewardResult compute_reward(const AgentState& ego, std::span<const AgentState> peers,
                            const Arena& arena, const RewardConfig& cfg) {
  if (check_goal(ego, arena.goal_radius)) {
    return {cfg.goal_reward, true, RewardCase::Goal};
  }
  switch (detect_collision(ego, peers, arena)) {
    case CollisionKind::PeerCollision:
      return {cfg.collision_reward, true, RewardCase::PeerCollision};
    case CollisionKind::WallCollision:
      return {cfg.collision_reward, true, RewardCase::WallCollision};
    case CollisionKind::None:
      break;
  }
  const double d2 = squared_norm(ego.goal - ego.pose.position());
  return {cfg.distance_coeff * d2, false, RewardCase::Distance};
}

std::string_view to_string(AgentStatus s) {
  switch (s) {
    case AgentStatus::Active: return "active";
    case AgentStatus::ReachedGoal: return "reached_goal";
    case AgentStatus::Collided: return "collided";
    case AgentStatus::TimedOut: return "timed_out";
  }
  return "unknown";
}

std::string_view to_string(CollisionKind k) {
  switch (k) {
    case CollisionKind::None: return "none";
    case CollisionKind::PeerCollision: return "peer_collision";
    case CollisionKind::WallCollision: return "wall_collision";
  }
  return "unknown";
}

}  // namespace marl
