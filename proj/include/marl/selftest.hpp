#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marl/sim.hpp"

// Property checks that compare the implementation against independently coded
// oracles. Used by `marl selftest` and the acceptance suite.
namespace marl::selftest {

// ---- oracles ----------------------------------------------------------------

// Advantage as the explicit lambda-weighted average of n-step advantages:
//   A_t = (1 - lambda) * sum_{n=1}^{H-1} lambda^{n-1} A_t^(n) + lambda^{H-1} A_t^(H)
// where H is the number of remaining transitions and A_t^(n) stops
// accumulating (and bootstrapping) after a terminal.
std::vector<double> gae_bruteforce(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const std::uint8_t> terminals, double gamma,
                                   double lambda);

// Straight transcription of the reward cases for the square arena with
// walls at |x| = half_extent, |z| = half_extent.
double reward_oracle(Vec2 ego, Vec2 goal, std::span<const Vec2> active_peers, double half_extent,
                     double robot_radius, double wall_width, double goal_radius, double r_goal,
                     double r_collision, double k_t);

// Minimum distance from p to `samples` evenly spaced points on every wall.
double sampled_wall_distance(Vec2 p, std::span<const Segment> walls, int samples);

// ---- checks -----------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Composite PPO loss gradient vs central differences (h = 1e-5) on `coords`
// random coordinates; passes when every relative error <= 1e-4.
CheckResult check_loss_gradient(int hidden_layers, std::uint64_t seed, int coords = 100,
                                bool separate_value = false);
// compute_gae vs gae_bruteforce on random episodes of length <= 6; |err| <= 1e-10.
CheckResult check_gae_oracle(std::uint64_t seed, int episodes = 1000);
// compute_reward vs reward_oracle on random states; exact equality.
CheckResult check_reward_oracle(std::uint64_t seed, int states = 10000);
// Observation length 4 + 2(N-1) and ascending peer order for N = 2..8.
CheckResult check_observation_layout(std::uint64_t seed);
// Segment distance vs 1e4-point sampling on random legal poses; <= 1e-6 m.
CheckResult check_wall_distance(std::uint64_t seed, int poses = 100);

std::vector<CheckResult> run_property_suite(std::uint64_t seed);

}  // namespace marl::selftest
