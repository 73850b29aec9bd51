#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace marl {

inline constexpr double kPi = 3.14159265358979323846;

// Planar point in the world X-Z plane (meters).
struct Vec2 {
  double x = 0.0;
  double z = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.z + b.z}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.z - b.z}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.z}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);
double squared_norm(Vec2 a);
double distance(Vec2 a, Vec2 b);

// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

// Robot pose. theta = 0 faces +Z; positive theta turns toward +X.
struct Pose {
  double px = 0.0;
  double pz = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {px, pz}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

// Saturated control command. v is the forward displacement per physics tick
// (meters), omega the yaw rate (rad/s). Construction clamps both channels.
class Action {
 public:
  static constexpr double kMaxLinear = 0.05;
  static constexpr double kMaxAngular = kPi;

  Action() = default;
  Action(double v, double omega);

  double v() const { return v_; }
  double omega() const { return omega_; }

  friend bool operator==(const Action&, const Action&) = default;

 private:
  double v_ = 0.0;
  double omega_ = 0.0;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

// Shortest Euclidean distance from p to the closed segment [s.a, s.b].
double point_segment_distance(Vec2 p, const Segment& s);

struct Arena {
  double half_extent = 5.0;
  double wall_width = 0.1;
  double robot_radius = 0.25;
  double goal_radius = 1.0;
  std::vector<Segment> walls;
  std::vector<Vec2> goals;

  // Square arena with four wall centerlines at x = +-half_extent and
  // z = +-half_extent, and one corner goal per agent inset one meter from
  // both adjacent walls. Agents beyond the fourth reuse goal (i mod 4).
  static Arena square(std::size_t n_agents, double half_extent = 5.0);

  // Throws std::invalid_argument when geometry is inconsistent.
  void validate() const;
};

struct RewardConfig {
  double goal_reward = 20.0;
  double collision_reward = -20.0;
  double distance_coeff = -0.01;

  void validate() const;
};

enum class AgentStatus : std::uint8_t { Active, ReachedGoal, Collided, TimedOut };

struct AgentState {
  Pose pose;
  Vec2 goal;
  AgentStatus status = AgentStatus::Active;
  std::int64_t decision_step_count = 0;
  double accumulated_reward = 0.0;

  bool active() const { return status == AgentStatus::Active; }
};

enum class CollisionKind : std::uint8_t { None, PeerCollision, WallCollision };

// Which branch of the reward function fired.
enum class RewardCase : std::uint8_t { Goal, PeerCollision, WallCollision, Distance };

struct RewardResult {
  double reward = 0.0;
  bool terminal = false;
  RewardCase kind = RewardCase::Distance;
};

// One physics tick: rotate by omega*dt, then translate v along the new heading.
Pose step_kinematics(const Pose& pose, const Action& action, double dt);

double min_wall_distance(Vec2 p, const Arena& arena);

// Inactive peers are ignored. Peer contact is reported ahead of wall contact.
CollisionKind detect_collision(const AgentState& ego, std::span<const AgentState> peers,
                               const Arena& arena);

bool check_goal(const AgentState& ego, double goal_radius = 1.0);

// Goal, then collision, then the squared-distance shaping term.
RewardResult compute_reward(const AgentState& ego, std::span<const AgentState> peers,
                            const Arena& arena, const RewardConfig& cfg);

std::string_view to_string(AgentStatus s);
std::string_view to_string(CollisionKind k);

}  // namespace marl
